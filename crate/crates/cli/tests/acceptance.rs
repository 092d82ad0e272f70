//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when a gating criterion fails.

use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uram_cli::{cmd_ablate, cmd_eval, cmd_shift_report, cmd_synth, cmd_train, load_pair, DataSource, ExperimentConfig};
use uram_core::analysis::{category_kl, domain_discrepancy, macro_f1, shift_report, spearman, F1Mode, Representation, KL_EPS};
use uram_core::corpus::{ClassDistribution, TokenBatch};
use uram_core::models::{
    sample_mask, ClassMode, ClassProbs, Classifier, Critic, Discriminator, Encoder, EncoderConfig, EncoderKind,
    FeatureBatch, MaskActor, MaskMatrix, MaskProbs, ParameterSet, Parameterized, MASK_EPS,
};
use uram_core::rewards::{consistency_reward, domain_reward, regularization_reward};
use uram_core::training::{
    actor_objective, critic_objective, discriminator_objective, episode_rewards, EpisodeState, Method, MetricsLog,
    ModelSpec, TrainConfig, Trainer,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

// ---------------------------------------------------------------------------
// 1. Gradient correctness
// ---------------------------------------------------------------------------

const FD_STEP: f64 = 1e-6;
const GRAD_TOL: f64 = 1e-3;
const MAX_PARAMS: usize = 1000;

/// Largest entry-wise relative error between `analytic` and central
/// differences of `loss` around `params`.
fn max_rel_err<P: Parameterized + Clone>(params: &P, analytic: &[f64], loss: impl Fn(&P) -> f64) -> f64 {
    let base = params.to_flat();
    assert_eq!(base.len(), analytic.len());
    let mut worst = 0.0f64;
    let mut probe = params.clone();
    let mut flat = base.clone();
    for i in 0..base.len() {
        flat[i] = base[i] + FD_STEP;
        probe.assign_flat(&flat);
        let up = loss(&probe);
        flat[i] = base[i] - FD_STEP;
        probe.assign_flat(&flat);
        let down = loss(&probe);
        flat[i] = base[i];
        let numeric = (up - down) / (2.0 * FD_STEP);
        let a = analytic[i];
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(err);
    }
    worst
}

fn random_features(rng: &mut ChaCha8Rng, n: usize, d: usize) -> FeatureBatch {
    FeatureBatch::new(Array2::from_shape_fn((n, d), |_| rng.gen_range(-1.0..1.0))).unwrap()
}

fn random_weights(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, d), |_| rng.gen_range(-1.0..1.0))
}

fn encoder_error(kind: EncoderKind, rng: &mut ChaCha8Rng) -> (f64, usize) {
    let enc = Encoder::new(
        &EncoderConfig {
            kind,
            vocab_size: 7,
            embed_dim: 3,
            hidden_dim: 3,
            feature_dim: 4,
        },
        rng,
    )
    .unwrap();
    let batch = TokenBatch::from_sequences(&[vec![2, 3, 4, 5], vec![6, 2], vec![3]]);
    let weights = random_weights(rng, 3, 4);
    let (_, cache) = enc.forward(&batch).unwrap();
    let mut g = enc.zeros_like();
    enc.backward(&batch, &cache, &weights, &mut g).unwrap();
    let err = max_rel_err(&enc, &g.to_flat(), |e| (e.encode(&batch).unwrap().values() * &weights).sum());
    (err, enc.num_params())
}

fn classifier_error(mode: ClassMode, rng: &mut ChaCha8Rng) -> (f64, usize) {
    let cla = Classifier::new(rng, 5, 3, mode);
    let x = random_features(rng, 4, 5);
    let labels = [0, 2, 1, 2];
    let logits = cla.logits(&x).unwrap();
    let (_, d_logits) = cla.loss_and_grad(&logits, &labels);
    let mut g = cla.zeros_like();
    cla.backward(&x, &d_logits, &mut g);
    let err = max_rel_err(&cla, &g.to_flat(), |c| c.loss_and_grad(&c.logits(&x).unwrap(), &labels).0);
    (err, cla.num_params())
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut errors: Vec<(&str, f64, usize)> = Vec::new();

    let (e, n) = encoder_error(EncoderKind::BagOfEmbeddings, &mut rng);
    errors.push(("bag encoder", e, n));
    let (e, n) = encoder_error(EncoderKind::BiLstm, &mut rng);
    errors.push(("bilstm encoder", e, n));
    let (e, n) = classifier_error(ClassMode::Softmax, &mut rng);
    errors.push(("classifier", e, n));
    let (e, n) = classifier_error(ClassMode::MultilabelSigmoid, &mut rng);
    errors.push(("multilabel classifier", e, n));

    let disc = Discriminator::new(&mut rng, 5, 3);
    let (xs, xt) = (random_features(&mut rng, 3, 5), random_features(&mut rng, 4, 5));
    let (_, g, _, _) = discriminator_objective(&disc, &xs, &xt).unwrap();
    let e = max_rel_err(&disc, &g.to_flat(), |d| discriminator_objective(d, &xs, &xt).unwrap().0);
    errors.push(("discriminator", e, disc.num_params()));

    let critic = Critic::new(&mut rng, 5, 3);
    let x = random_features(&mut rng, 4, 5);
    let targets = Array1::from_iter((0..4).map(|_| rng.gen_range(-1.0..1.0)));
    let (_, g) = critic_objective(&critic, &x, &targets).unwrap();
    let e = max_rel_err(&critic, &g.to_flat(), |c| critic_objective(c, &x, &targets).unwrap().0);
    errors.push(("critic", e, critic.num_params()));

    let actor = MaskActor::new(&mut rng, 5);
    let x = random_features(&mut rng, 4, 5);
    let weights = random_weights(&mut rng, 4, 5);
    let probs = actor.mask_probs(&x).unwrap();
    let mut g = actor.zeros_like();
    actor.backward_from_probs(&x, &probs, &weights, &mut g);
    let e = max_rel_err(&actor, &g.to_flat(), |a| (a.mask_probs(&x).unwrap().values() * &weights).sum());
    errors.push(("mask actor", e, actor.num_params()));

    let action = sample_mask(&probs, &mut rng);
    let advantage = Array1::from_iter((0..4).map(|_| rng.gen_range(-1.0..1.0)));
    let beta = 0.05;
    let (_, g) = actor_objective(&actor, &x, &action, &advantage, beta).unwrap();
    let e = max_rel_err(&actor, &g.to_flat(), |a| actor_objective(a, &x, &action, &advantage, beta).unwrap().0);
    errors.push(("actor surrogate", e, actor.num_params()));

    let worst = errors.iter().map(|e| e.1).fold(0.0, f64::max);
    let small = errors.iter().all(|e| e.2 <= MAX_PARAMS);
    let detail = errors
        .iter()
        .map(|(name, e, n)| format!("{name} {e:.1e} ({n} params)"))
        .collect::<Vec<_>>()
        .join(", ");
    outcome(worst < GRAD_TOL && small, detail)
}

// ---------------------------------------------------------------------------
// 2. Reward identities
// ---------------------------------------------------------------------------

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut disc = Discriminator::new(&mut rng, 6, 3);
    disc.fill(0.0);
    let (rs, rt) = domain_reward(&random_features(&mut rng, 5, 6), &random_features(&mut rng, 3, 6), &disc).unwrap();
    let ln2 = 2f64.ln();
    let rd_ok = rs.iter().chain(rt.iter()).all(|&r| (r - ln2).abs() <= 1e-9);

    let probs = ClassProbs {
        values: Array2::from_shape_fn((4, 3), |(i, j)| [0.2, 0.3, 0.5][(i + j) % 3]),
        mode: ClassMode::Softmax,
    };
    let rc_ok = consistency_reward(&probs, &probs).unwrap().iter().all(|&r| r == 0.0);

    let half = MaskMatrix::new(Array2::from_shape_fn((2, 8), |(_, j)| (j % 2) as f64)).unwrap();
    let reg = [
        regularization_reward(&MaskMatrix::zeros(2, 8)),
        regularization_reward(&half),
        regularization_reward(&MaskMatrix::ones(2, 8)),
    ];
    let reg_ok = reg
        .iter()
        .zip([0.0, 0.5, 1.0])
        .all(|(r, want)| r.iter().all(|&v| v == want));
    outcome(
        rd_ok && rc_ok && reg_ok,
        format!("r_d=ln2 {rd_ok}, r_c=0 {rc_ok}, r_reg in {{0,0.5,1}} {reg_ok}"),
    )
}

// ---------------------------------------------------------------------------
// 3. Bernoulli sampling statistics
// ---------------------------------------------------------------------------

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let half = MaskProbs::new(Array2::from_elem((100, 100), 0.5)).unwrap();
    let mean = sample_mask(&half, &mut rng).density();
    let mean_ok = (0.485..=0.515).contains(&mean);

    // A batch of 4 x 64 entries; at the clamp each entry flips with
    // probability 1e-6, so a batch stays constant with probability
    // (1 - 1e-6)^256 > 0.999.
    let (rows, cols, batches) = (4, 64, 2000);
    let analytic = (1.0 - MASK_EPS).powi((rows * cols) as i32);
    let low = MaskProbs::new(Array2::from_elem((rows, cols), MASK_EPS)).unwrap();
    let high = MaskProbs::new(Array2::from_elem((rows, cols), 1.0 - MASK_EPS)).unwrap();
    let zeros = (0..batches).filter(|_| sample_mask(&low, &mut rng).density() == 0.0).count();
    let ones = (0..batches).filter(|_| sample_mask(&high, &mut rng).density() == 1.0).count();
    let (fz, fo) = (zeros as f64 / batches as f64, ones as f64 / batches as f64);
    let pass = mean_ok && analytic > 0.999 && fz > 0.999 && fo > 0.999;
    outcome(
        pass,
        format!("mean at p=0.5: {mean:.4}; constant batches: zeros {fz:.4}, ones {fo:.4} (analytic {analytic:.5})"),
    )
}

// ---------------------------------------------------------------------------
// 4. Critic regression
// ---------------------------------------------------------------------------

fn frozen_trainer(seed: u64, d: usize, config: TrainConfig) -> Trainer {
    let spec = ModelSpec {
        encoder: EncoderKind::BagOfEmbeddings,
        embed_dim: 4,
        hidden_dim: 4,
        feature_dim: d,
        ..ModelSpec::default()
    };
    let model = spec.model_config(10, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = ParameterSet::new(&model, &mut rng).unwrap();
    let mask_rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1000));
    let aux_rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(2000));
    Trainer::new(config, params, mask_rng, aux_rng)
}

/// Episode rewards from a frozen model: features drawn from a fixed
/// distribution, masks from the frozen policy, rewards from the frozen
/// discriminator and classifier. Drawn once, then held fixed.
fn frozen_episode(tr: &Trainer, rng: &mut ChaCha8Rng, n: usize) -> (FeatureBatch, Array1<f64>) {
    let d = tr.params.critic.net.input_dim();
    let features = FeatureBatch::new(Array2::from_shape_fn((n, d), |_| rng.gen_range(-1.0f64..1.0).tanh())).unwrap();
    let probs = tr.params.mask_actor.mask_probs(&features).unwrap();
    let action = sample_mask(&probs, rng);
    let episode = EpisodeState::new(features, action).unwrap();
    let rewards = episode_rewards(&tr.params, &episode, n / 2, &tr.config).unwrap();
    (episode.masked, rewards.r_total)
}

fn criterion_4() -> Outcome {
    let mut ratios = Vec::new();
    for seed in 0..5 {
        let mut tr = frozen_trainer(seed, 16, TrainConfig::default());
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 40);
        let (x, r) = frozen_episode(&tr, &mut rng, 64);
        let initial = critic_objective(&tr.params.critic, &x, &r).unwrap().0;
        for _ in 0..500 {
            tr.critic_step(&x, &r).unwrap();
        }
        let fin = critic_objective(&tr.params.critic, &x, &r).unwrap().0;
        ratios.push(fin / initial);
    }
    let passed = ratios.iter().filter(|&&r| r <= 0.1).count();
    outcome(
        passed == 5,
        format!(
            "{passed}/5 seeds at <= 10% of initial MSE (ratios {})",
            ratios.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>().join(", ")
        ),
    )
}

// ---------------------------------------------------------------------------
// 5. Policy-gradient bandit
// ---------------------------------------------------------------------------

fn criterion_5() -> Outcome {
    let d = 16;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let features = random_features(&mut rng, 64, d);

    let mut tr = frozen_trainer(
        5,
        d,
        TrainConfig {
            entropy_weight: 0.0,
            ..TrainConfig::default()
        },
    );
    let (epochs, steps) = (20, 50);
    let mut density = Vec::new();
    for _ in 0..epochs {
        let mut sum = 0.0;
        for _ in 0..steps {
            sum += tr
                .actor_step_with(&features, |m| m.values().mean_axis(ndarray::Axis(1)).unwrap())
                .unwrap();
        }
        density.push(sum / steps as f64);
    }
    let idx: Vec<f64> = (0..epochs).map(|e| e as f64).collect();
    let rho = spearman(&idx, &density).unwrap();

    let mut tr = frozen_trainer(
        6,
        d,
        TrainConfig {
            entropy_weight: 0.1,
            ..TrainConfig::default()
        },
    );
    let start = mean_distance_from_half(&tr, &features);
    for _ in 0..1000 {
        tr.actor_step_with(&features, |m| Array1::zeros(m.dim().0)).unwrap();
    }
    let end = mean_distance_from_half(&tr, &features);
    outcome(
        rho > 0.9 && end < 0.05,
        format!(
            "density {:.3} -> {:.3}, spearman {rho:.3}; mean |p - 0.5| {start:.3} -> {end:.4}",
            density[0],
            density[epochs - 1]
        ),
    )
}

fn mean_distance_from_half(tr: &Trainer, features: &FeatureBatch) -> f64 {
    let p = tr.params.mask_actor.mask_probs(features).unwrap();
    p.values().mapv(|v| (v - 0.5).abs()).mean().unwrap()
}

// ---------------------------------------------------------------------------
// 6. Metric oracles
// ---------------------------------------------------------------------------

fn kl_oracle(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(a, b)| a * (a / b).ln()).sum()
}

fn criterion_6() -> Outcome {
    // Confusion arithmetic for gold [1,1,0,0], predictions [1,0,0,0]:
    // class 1 has tp 1, fp 0, fn 1 -> 2/3; class 0 has tp 2, fp 1, fn 0 -> 0.8.
    let hand = 100.0 * (2.0 / 3.0 + 0.8) / 2.0;
    let f1_a = macro_f1(&[1, 0, 0, 0], &[1, 1, 0, 0], 2).unwrap();
    // All predictions class 0 on balanced gold: class 0 -> 2/3, class 1 -> 0.
    let hand_b = 100.0 * (2.0 / 3.0) / 2.0;
    let f1_b = macro_f1(&[0, 0, 0, 0], &[1, 1, 0, 0], 2).unwrap();
    let f1_ok = f1_a == hand && f1_b == hand_b && format!("{f1_a:.2}") == "73.33" && format!("{f1_b:.2}") == "33.33";

    let p = ClassDistribution::new(vec![0.9, 0.1]).unwrap();
    let q = ClassDistribution::new(vec![0.5, 0.5]).unwrap();
    let kl = category_kl(&p, &q, KL_EPS).unwrap();
    let oracle = kl_oracle(&[0.9, 0.1], &[0.5, 0.5]);
    let kl_ok = (kl - 0.3681).abs() <= 1e-4 && (kl - oracle).abs() <= 1e-6;

    let a = FeatureBatch::new(ndarray::array![[0.0, 0.0]]).unwrap();
    let b = FeatureBatch::new(ndarray::array![[3.0, 4.0]]).unwrap();
    let dw = domain_discrepancy(&a, &b).unwrap();
    outcome(
        f1_ok && kl_ok && dw == 5.0,
        format!("macro F1 {f1_a:.2}/{f1_b:.2}, KL {kl:.4}, discrepancy {dw}"),
    )
}

// ---------------------------------------------------------------------------
// 7-9. End-to-end runs on the synthetic pair
// ---------------------------------------------------------------------------

const E2E_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

fn synthetic_config(out: &Path) -> ExperimentConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/synthetic.conf");
    let mut cfg = ExperimentConfig::from_file(&path).expect("synthetic config");
    cfg.out = out.to_path_buf();
    cfg.seeds = E2E_SEEDS.to_vec();
    cfg
}

struct EndToEnd {
    uram: Vec<MetricsLog>,
    no_adapt: Vec<MetricsLog>,
    dw_uram: Vec<f64>,
    dw_no_adapt: Vec<f64>,
    ablation: uram_core::analysis::ComparisonTable,
    seconds: f64,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn end_to_end(dir: &Path) -> EndToEnd {
    let start = Instant::now();
    let mut cfg = synthetic_config(dir);
    let (ablation, logs) = cmd_ablate(&cfg).expect("ablation runs");
    let uram: Vec<MetricsLog> = logs.into_iter().filter(|l| l.method == "URAM").collect();
    cfg.method = Method::NoAdapt;
    let no_adapt = cmd_train(&cfg).expect("no-adapt runs");

    let mut dw_uram = Vec::new();
    let mut dw_no_adapt = Vec::new();
    for &seed in &E2E_SEEDS {
        let (s, t, _) = load_pair(&cfg.data, seed).unwrap();
        let ck = |p: PathBuf| uram_core::models::Checkpoint::load(&p).unwrap();
        let u = ck(dir.join(format!("ablation/URAM/{seed}/checkpoint.json")));
        let n = ck(dir.join(format!("no-adapt/{seed}/checkpoint.json")));
        dw_uram.push(shift_report(&u, &s, &t, Representation::Masked, ("s", "t")).unwrap().domain_wise);
        dw_no_adapt.push(shift_report(&n, &s, &t, Representation::Encoder, ("s", "t")).unwrap().domain_wise);
    }
    EndToEnd {
        uram,
        no_adapt,
        dw_uram,
        dw_no_adapt,
        ablation,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn final_f1s(logs: &[MetricsLog]) -> Vec<f64> {
    logs.iter().map(|l| l.final_target_f1().unwrap()).collect()
}

fn criterion_7(e: &EndToEnd) -> Outcome {
    let (u, n) = (mean(&final_f1s(&e.uram)), mean(&final_f1s(&e.no_adapt)));
    let (du, dn) = (mean(&e.dw_uram), mean(&e.dw_no_adapt));
    let f1_ok = u - n >= 2.0;
    let dw_ok = du < dn;
    outcome(
        f1_ok && dw_ok,
        format!(
            "target macro-F1 URAM {u:.2} vs no-adapt {n:.2} (margin {:+.2}, need >= 2): {}; domain_wise {du:.3} vs {dn:.3}: {}; {:.0}s",
            u - n,
            if f1_ok { "ok" } else { "short" },
            if dw_ok { "ok" } else { "not lower" },
            e.seconds
        ),
    )
}

fn criterion_8(e: &EndToEnd) -> Outcome {
    let row = |m: &str| e.ablation.row(m).map(|r| r.mean);
    let rows = e.ablation.rows.len();
    match (row("URAM"), row("-R_d"), row("-R_c")) {
        (Some(full), Some(rd), Some(rc)) => outcome(
            rows == 3 && full >= rd.max(rc) - 1.0,
            format!("{rows} rows; URAM {full:.2}, -R_d {rd:.2}, -R_c {rc:.2}"),
        ),
        _ => outcome(false, format!("missing ablation rows ({rows} present)")),
    }
}

/// Soft: reported only. The structural part (every method logs a
/// per-epoch target F1) still gates.
fn criterion_9(e: &EndToEnd) -> (Outcome, bool) {
    let complete = e
        .uram
        .iter()
        .chain(&e.no_adapt)
        .all(|l| l.target_f1_series().len() == l.records.len() && !l.records.is_empty());
    let epochs = e.uram[0].records.len();
    let series: Vec<f64> = (0..epochs)
        .map(|i| mean(&e.uram.iter().map(|l| l.target_f1_series()[i]).collect::<Vec<_>>()))
        .collect();
    let fin = series[epochs - 1];
    let at15 = series[14.min(epochs - 1)];
    let converged = (at15 - fin).abs() <= 2.0;
    (
        outcome(
            complete && converged,
            format!("per-epoch logs complete {complete}; mean URAM target F1 at epoch 15 {at15:.2}, final {fin:.2} (soft)"),
        ),
        complete,
    )
}

// ---------------------------------------------------------------------------
// 10. Reproducibility
// ---------------------------------------------------------------------------

fn csv_bytes(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|e| e == "csv") {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn run_everything(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let text = "seeds = 7, 8\nmax_iterations = 3\nbatch_size = 32\nencoder = bag\nembed_dim = 16\nfeature_dim = 16\nsynth.n_per_domain = 200\n";
    let mut cfg = ExperimentConfig::from_str_with_base(text, dir).unwrap();
    cfg.out = dir.join("runs");
    for method in [Method::Uram, Method::NoAdapt, Method::Dann] {
        cfg.method = method;
        cmd_train(&cfg).unwrap();
    }
    cfg.method = Method::Uram;
    cmd_ablate(&cfg).unwrap();
    let DataSource::Synth(synth) = &cfg.data else { unreachable!() };
    let (s, t) = cmd_synth(synth, &dir.join("data")).unwrap();
    let ck = dir.join("runs/uram/7/checkpoint.json");
    for (name, repr) in [("plain", Representation::Encoder), ("masked", Representation::Masked)] {
        cmd_eval(&ck, &t, repr, F1Mode::Macro, &dir.join(format!("eval-{name}"))).unwrap();
        cmd_shift_report(&ck, &s, &t, repr, &dir.join(format!("shift-{name}"))).unwrap();
    }
    csv_bytes(dir)
}

fn criterion_10() -> Outcome {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = run_everything(a.path());
    let second = run_everything(b.path());
    let differing: Vec<String> = first
        .iter()
        .zip(&second)
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.0.display().to_string())
        .collect();
    outcome(
        first.len() == second.len() && differing.is_empty() && first.len() >= 10,
        format!("{} CSV files compared, {} differ {:?}", first.len(), differing.len(), differing),
    )
}

fn report(failed: &mut Vec<usize>, n: usize, name: &str, o: Outcome, gating: bool) {
    let tag = if o.pass { "PASS" } else { "FAIL" };
    let soft = if gating { "" } else { " [soft]" };
    println!("criterion {n:>2} {name}: {tag}{soft} - {}", o.detail);
    if gating && !o.pass {
        failed.push(n);
    }
}

/// Numeric arguments select criteria (`cargo test --test acceptance -- 1 7`);
/// anything else is ignored.
fn selected() -> Vec<usize> {
    let picked: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    if picked.is_empty() {
        (1..=10).collect()
    } else {
        picked
    }
}

fn main() {
    let want = selected();
    let on = |n: usize| want.contains(&n);
    let mut failed = Vec::new();
    let cheap: [(usize, &str, fn() -> Outcome); 6] = [
        (1, "gradient correctness", criterion_1),
        (2, "reward identities", criterion_2),
        (3, "bernoulli sampling", criterion_3),
        (4, "critic regression", criterion_4),
        (5, "policy-gradient bandit", criterion_5),
        (6, "metric oracles", criterion_6),
    ];
    for (n, name, check) in cheap {
        if on(n) {
            report(&mut failed, n, name, check(), true);
        }
    }

    if on(7) || on(8) || on(9) {
        let dir = tempfile::tempdir().unwrap();
        let e2e = end_to_end(dir.path());
        if on(7) {
            report(&mut failed, 7, "adaptation ordering", criterion_7(&e2e), true);
        }
        if on(8) {
            report(&mut failed, 8, "ablation structure", criterion_8(&e2e), true);
        }
        if on(9) {
            let (soft, structural) = criterion_9(&e2e);
            report(&mut failed, 9, "convergence logging", soft, false);
            if !structural {
                failed.push(9);
            }
        }
    }
    if on(10) {
        report(&mut failed, 10, "reproducibility", criterion_10(), true);
    }

    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
