use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use uram_core::baselines::{dann_train, grl_apply, grl_backward, no_adapt_train, GrlConfig};
use uram_core::corpus::{synth_domain_pair, ClassDistribution, LabeledDataset, SynthConfig, TokenBatch};
use uram_core::models::{Discriminator, Encoder, EncoderConfig, EncoderKind, Parameterized};
use uram_core::training::{discriminator_objective, ModelSpec, TrainConfig};

fn config(epochs: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        seed,
        max_iterations: epochs,
        model: ModelSpec {
            encoder: EncoderKind::BagOfEmbeddings,
            embed_dim: 32,
            hidden_dim: 32,
            feature_dim: 32,
            ..ModelSpec::default()
        },
        ..TrainConfig::default()
    }
}

fn pair(shift: f64, balanced: bool, n: usize, seed: u64) -> (LabeledDataset, LabeledDataset) {
    let mut cfg = SynthConfig {
        shift_strength: shift,
        n_per_domain: n,
        seed,
        ..SynthConfig::default()
    };
    if balanced {
        cfg.source_dist = ClassDistribution::uniform(2);
        cfg.target_dist = ClassDistribution::uniform(2);
    }
    synth_domain_pair(&cfg).unwrap()
}

fn domain_loss(enc: &Encoder, disc: &Discriminator, s: &TokenBatch, t: &TokenBatch) -> f64 {
    let fs = grl_apply(&enc.encode(s).unwrap());
    let ft = grl_apply(&enc.encode(t).unwrap());
    discriminator_objective(disc, &fs, &ft).unwrap().0
}

#[test]
fn reversed_encoder_gradient_matches_negated_finite_difference() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let enc = Encoder::new(
        &EncoderConfig {
            kind: EncoderKind::BagOfEmbeddings,
            vocab_size: 8,
            embed_dim: 4,
            hidden_dim: 4,
            feature_dim: 5,
        },
        &mut rng,
    )
    .unwrap();
    let disc = Discriminator::new(&mut rng, 5, 3);
    let s = TokenBatch::from_sequences(&[vec![2, 3, 4], vec![5, 2]]);
    let t = TokenBatch::from_sequences(&[vec![6, 7], vec![3, 7, 6, 2]]);
    let strength = 0.7;

    let (fs, cs) = enc.forward(&s).unwrap();
    let (ft, ct) = enc.forward(&t).unwrap();
    let (_, _, dxs, dxt) = discriminator_objective(&disc, &grl_apply(&fs), &grl_apply(&ft)).unwrap();
    let mut g = enc.zeros_like();
    enc.backward(&s, &cs, &grl_backward(&dxs, strength), &mut g).unwrap();
    enc.backward(&t, &ct, &grl_backward(&dxt, strength), &mut g).unwrap();
    let analytic = g.to_flat();

    let base = enc.to_flat();
    let h = 1e-6;
    for (i, &a) in analytic.iter().enumerate() {
        let mut plus = enc.clone();
        let mut minus = enc.clone();
        let mut p = base.clone();
        p[i] += h;
        plus.assign_flat(&p);
        p[i] -= 2.0 * h;
        minus.assign_flat(&p);
        let fd = (domain_loss(&plus, &disc, &s, &t) - domain_loss(&minus, &disc, &s, &t)) / (2.0 * h);
        let expected = -strength * fd;
        let scale = expected.abs().max(a.abs()).max(1e-7);
        assert!((a - expected).abs() / scale < 1e-4, "param {i}: {a} vs {expected}");
    }
}

#[test]
fn zero_reversal_strength_reduces_dann_to_no_adapt() {
    let (s, t) = pair(0.5, false, 300, 0);
    let base = config(3, 0);
    let plain = no_adapt_train(&base, &s, &t, "toy").unwrap();
    let dann = dann_train(
        &TrainConfig {
            grl: GrlConfig { reversal_strength: 0.0 },
            ..base.clone()
        },
        &s,
        &t,
        "toy",
    )
    .unwrap();
    assert_eq!(plain.checkpoint.params.encoder, dann.checkpoint.params.encoder);
    assert_eq!(plain.checkpoint.params.classifier, dann.checkpoint.params.classifier);
    assert_eq!(plain.log.target_f1_series(), dann.log.target_f1_series());

    let full = dann_train(&base, &s, &t, "toy").unwrap();
    assert_ne!(plain.checkpoint.params.encoder, full.checkpoint.params.encoder);
}

#[test]
fn dann_is_deterministic() {
    let (s, t) = pair(0.5, false, 200, 3);
    let a = dann_train(&config(2, 3), &s, &t, "toy").unwrap();
    let b = dann_train(&config(2, 3), &s, &t, "toy").unwrap();
    assert_eq!(a.log.to_csv_string().unwrap(), b.log.to_csv_string().unwrap());
    assert_eq!(a.checkpoint, b.checkpoint);
}

fn mean_gap(shift: f64) -> f64 {
    let gaps: Vec<f64> = (0..5)
        .map(|seed| {
            let (s, t) = pair(shift, true, 2000, seed);
            // A larger held-out split keeps the source estimate from being
            // noisier than the target one.
            let cfg = TrainConfig {
                holdout_fraction: 0.3,
                ..config(10, seed)
            };
            let out = no_adapt_train(&cfg, &s, &t, "toy").unwrap();
            let last = out.log.records.last().unwrap();
            last.source_f1.unwrap() - last.target_f1.unwrap()
        })
        .collect();
    gaps.iter().sum::<f64>() / gaps.len() as f64
}

#[test]
fn no_adapt_transfers_without_shift() {
    let gap = mean_gap(0.0);
    assert!(gap.abs() < 3.0, "source minus target F1 {gap}");
}

#[test]
fn no_adapt_degrades_under_strong_shift() {
    let gap = mean_gap(0.8);
    assert!(gap > 5.0, "source minus target F1 {gap}");
}

#[test]
fn grl_forward_leaves_values_untouched() {
    let x = uram_core::models::FeatureBatch::new(Array2::from_shape_fn((3, 2), |(i, j)| i as f64 - j as f64 * 0.5)).unwrap();
    assert_eq!(grl_apply(&x).values(), x.values());
}
