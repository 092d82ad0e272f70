//! Command implementations behind the `uram` binary.

pub mod config;

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use uram_core::analysis::{comparison_table, f1_score, shift_report, ComparisonTable, F1Mode, Representation, RunResult, ShiftReport};
use uram_core::corpus::{load_dataset, synth_domain_pair, write_jsonl, DataFormat, Domain, LabeledDataset, SynthConfig};
use uram_core::models::Checkpoint;
use uram_core::training::{predict, run_method, Method, MetricsLog, RunOutput, TrainConfig};

pub use config::{DataSource, ExperimentConfig};

/// Exit status for configuration and contract errors.
pub const EXIT_CONFIG: i32 = 2;
/// Exit status for a numerical abort.
pub const EXIT_NUMERIC: i32 = 3;

/// Maps an error chain to the process exit status.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(uram_core::Error::NonFinite { .. }) = cause.downcast_ref::<uram_core::Error>() {
            return EXIT_NUMERIC;
        }
    }
    EXIT_CONFIG
}

/// Loads or generates the (source, target) pair for `seed`. Synthetic
/// data uses the seed as its corpus seed.
pub fn load_pair(data: &DataSource, seed: u64) -> Result<(LabeledDataset, LabeledDataset, String)> {
    match data {
        DataSource::Files { source, target } => {
            let s = load_dataset(source, DataFormat::from_path(source)?, Domain::Source, None)
                .with_context(|| format!("loading {}", source.display()))?;
            let t = load_dataset(target, DataFormat::from_path(target)?, Domain::Target, Some(s.label_map()))
                .with_context(|| format!("loading {}", target.display()))?;
            let id = format!("{}-{}", stem(source), stem(target));
            Ok((s, t, id))
        }
        DataSource::Synth(synth) => {
            let cfg = SynthConfig {
                seed,
                ..synth.clone()
            };
            let (s, t) = synth_domain_pair(&cfg)?;
            Ok((s, t, format!("synth-{}", cfg.shift_strength)))
        }
    }
}

fn stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Number of seed runs allowed in parallel, from `URAM_NUM_WORKERS`.
pub fn num_workers() -> usize {
    std::env::var("URAM_NUM_WORKERS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or(1)
}

/// Runs `job` for every seed with at most `workers` in flight; results
/// come back in seed order.
pub fn for_each_seed<T, F>(seeds: &[u64], workers: usize, job: F) -> Vec<Result<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync,
{
    let mut out: Vec<Option<Result<T>>> = (0..seeds.len()).map(|_| None).collect();
    for (chunk_idx, chunk) in seeds.chunks(workers.max(1)).enumerate() {
        let results: Vec<Result<T>> = std::thread::scope(|scope| {
            let handles: Vec<_> = chunk.iter().map(|&s| {
                let job = &job;
                scope.spawn(move || job(s))
            }).collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or_else(|_| Err(anyhow::anyhow!("worker panicked"))))
                .collect()
        });
        for (i, r) in results.into_iter().enumerate() {
            out[chunk_idx * workers.max(1) + i] = Some(r);
        }
    }
    out.into_iter().map(|r| r.expect("every seed ran")).collect()
}

/// Trains one seed and writes `checkpoint.json` and `metrics.csv` under
/// `<dir>/<seed>/`.
pub fn train_seed(cfg: &ExperimentConfig, method: Method, seed: u64, dir: &Path, tag: &str) -> Result<RunOutput> {
    let (source, target, dataset_id) = load_pair(&cfg.data, seed)?;
    let seed_dir = dir.join(seed.to_string());
    std::fs::create_dir_all(&seed_dir).with_context(|| format!("creating {}", seed_dir.display()))?;
    let train = TrainConfig {
        seed,
        snapshot_dir: Some(seed_dir.join("abort")),
        ..cfg.train.clone()
    };
    let mut out = run_method(method, &train, &source, &target, &dataset_id)?;
    out.log.relabel(tag);
    out.checkpoint.save(&seed_dir.join("checkpoint.json"))?;
    out.log.write_csv(&seed_dir.join("metrics.csv"))?;
    Ok(out)
}

fn write_table(table: &ComparisonTable, dir: &Path, name: &str) -> Result<()> {
    std::fs::write(dir.join(format!("{name}.csv")), table.to_csv())?;
    std::fs::write(dir.join(format!("{name}.txt")), table.to_text())?;
    Ok(())
}

/// One run per seed; returns the per-seed logs in seed order.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<Vec<MetricsLog>> {
    cfg.validate()?;
    let dir = cfg.out.join(cfg.method.name());
    let logs = for_each_seed(&cfg.seeds, num_workers(), |seed| {
        train_seed(cfg, cfg.method, seed, &dir, cfg.method.name()).map(|o| o.log)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let results = logs.iter().map(MetricsLog::run_result).collect::<uram_core::Result<Vec<_>>>();
    if let Ok(results) = results {
        write_table(&comparison_table(&results)?, &dir, "summary")?;
    }
    Ok(logs)
}

pub const ABLATION_ROWS: [&str; 3] = ["URAM", "-R_d", "-R_c"];

/// Full model and the two single-reward ablations for every seed.
pub fn cmd_ablate(cfg: &ExperimentConfig) -> Result<(ComparisonTable, Vec<MetricsLog>)> {
    cfg.validate()?;
    if cfg.method != Method::Uram {
        bail!("ablation runs need method = uram");
    }
    if cfg.train.disable_r_d && cfg.train.disable_r_c {
        bail!("disabling both rewards leaves nothing to ablate");
    }
    let mut logs = Vec::new();
    for (tag, rd, rc) in [("URAM", false, false), ("-R_d", true, false), ("-R_c", false, true)] {
        let mut variant = cfg.clone();
        variant.train.disable_r_d = rd;
        variant.train.disable_r_c = rc;
        let dir = cfg.out.join("ablation").join(tag);
        let runs = for_each_seed(&cfg.seeds, num_workers(), |seed| {
            train_seed(&variant, Method::Uram, seed, &dir, tag).map(|o| o.log)
        });
        for r in runs {
            logs.push(r?);
        }
    }
    let results: Vec<RunResult> = logs
        .iter()
        .map(MetricsLog::run_result)
        .collect::<uram_core::Result<_>>()?;
    let table = comparison_table(&results)?;
    let dir = cfg.out.join("ablation");
    write_table(&table, &dir, "ablation")?;
    Ok((table, logs))
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalOutcome {
    pub f1: f64,
    pub predictions: PathBuf,
}

/// Scores a checkpoint on a labeled file and writes one prediction row per
/// document in input order.
pub fn cmd_eval(checkpoint: &Path, data: &Path, path: Representation, mode: F1Mode, out: &Path) -> Result<EvalOutcome> {
    let ck = Checkpoint::load(checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
    let labels = uram_core::corpus::LabelMap::numeric(ck.config.num_classes);
    let format = DataFormat::from_path(data)?;
    let dataset = match load_dataset(data, format, Domain::Target, None) {
        Ok(d) if d.num_classes() == ck.config.num_classes => d,
        _ => load_dataset(data, format, Domain::Target, Some(&labels))
            .with_context(|| format!("loading {}", data.display()))?,
    };
    let gold = dataset
        .labels_for_evaluation()
        .context("evaluation needs every document labeled")?;
    let pred = predict(&ck, &dataset, path)?;
    let f1 = f1_score(mode, &pred.labels, &gold, ck.config.num_classes)?;

    std::fs::create_dir_all(out)?;
    let file = out.join("predictions.csv");
    let mut w = csv::Writer::from_path(&file)?;
    let mut header = vec!["index".to_string(), "gold".to_string(), "predicted".to_string()];
    header.extend((0..ck.config.num_classes).map(|c| format!("prob_{c}")));
    w.write_record(&header)?;
    for (i, (&p, &g)) in pred.labels.iter().zip(&gold).enumerate() {
        let mut row = vec![i.to_string(), g.to_string(), p.to_string()];
        row.extend(pred.probs.values.row(i).iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(EvalOutcome { f1, predictions: file })
}

pub fn cmd_shift_report(
    checkpoint: &Path,
    source: &Path,
    target: &Path,
    repr: Representation,
    out: &Path,
) -> Result<ShiftReport> {
    let ck = Checkpoint::load(checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
    let s = load_dataset(source, DataFormat::from_path(source)?, Domain::Source, None)?;
    let t = load_dataset(target, DataFormat::from_path(target)?, Domain::Target, Some(s.label_map()))?;
    let report = shift_report(&ck, &s, &t, repr, (&stem(source), &stem(target)))?;
    std::fs::create_dir_all(out)?;
    std::fs::write(
        out.join("shift_report.csv"),
        format!("{}\n{}\n", ShiftReport::csv_header(), report.csv_row()),
    )?;
    Ok(report)
}

/// Writes `source.jsonl` and `target.jsonl` (with label sidecars).
pub fn cmd_synth(synth: &SynthConfig, out: &Path) -> Result<(PathBuf, PathBuf)> {
    let (s, t) = synth_domain_pair(synth)?;
    std::fs::create_dir_all(out)?;
    let (sp, tp) = (out.join("source.jsonl"), out.join("target.jsonl"));
    write_jsonl(&s, &sp)?;
    write_jsonl(&t, &tp)?;
    Ok((sp, tp))
}
