//! Evaluation metrics, shift diagnostics and comparison tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Axis};
use serde::{Deserialize, Serialize};

use crate::corpus::{ClassDistribution, Document, LabeledDataset, TokenBatch, DEFAULT_MAX_LEN};
use crate::error::{shape_err, Error, Result};
use crate::models::{apply_mask, check_vocab, Checkpoint, FeatureBatch, Parameterized};

pub const KL_EPS: f64 = 1e-8;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum F1Mode {
    #[default]
    Macro,
    Micro,
}

impl std::str::FromStr for F1Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "macro" => Ok(Self::Macro),
            "micro" => Ok(Self::Micro),
            other => Err(Error::Config(format!("unknown f1 mode `{other}`"))),
        }
    }
}

fn check_labels(predictions: &[usize], gold: &[usize], num_classes: usize) -> Result<()> {
    if predictions.len() != gold.len() {
        return Err(shape_err(
            format!("{} predictions", gold.len()),
            predictions.len(),
        ));
    }
    if let Some(&bad) = predictions.iter().chain(gold).find(|&&l| l >= num_classes) {
        return Err(Error::Schema(format!(
            "label {bad} out of range for {num_classes} classes"
        )));
    }
    Ok(())
}

/// Unweighted mean of per-class F1, on a 0-100 scale. A class with no
/// true positives (including one absent everywhere) scores 0.
pub fn macro_f1(predictions: &[usize], gold: &[usize], num_classes: usize) -> Result<f64> {
    check_labels(predictions, gold, num_classes)?;
    if num_classes == 0 {
        return Err(Error::Empty("no classes".into()));
    }
    let mut tp = vec![0usize; num_classes];
    let mut fp = vec![0usize; num_classes];
    let mut fn_ = vec![0usize; num_classes];
    for (&p, &g) in predictions.iter().zip(gold) {
        if p == g {
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fn_[g] += 1;
        }
    }
    let total: f64 = (0..num_classes)
        .map(|c| {
            let denom = 2 * tp[c] + fp[c] + fn_[c];
            if denom == 0 {
                0.0
            } else {
                2.0 * tp[c] as f64 / denom as f64
            }
        })
        .sum();
    Ok(100.0 * total / num_classes as f64)
}

/// Micro-averaged F1; for single-label data this is accuracy, 0-100.
pub fn micro_f1(predictions: &[usize], gold: &[usize], num_classes: usize) -> Result<f64> {
    check_labels(predictions, gold, num_classes)?;
    if gold.is_empty() {
        return Err(Error::Empty("no labels to score".into()));
    }
    let hits = predictions.iter().zip(gold).filter(|(p, g)| p == g).count();
    Ok(100.0 * hits as f64 / gold.len() as f64)
}

pub fn f1_score(mode: F1Mode, predictions: &[usize], gold: &[usize], num_classes: usize) -> Result<f64> {
    match mode {
        F1Mode::Macro => macro_f1(predictions, gold, num_classes),
        F1Mode::Micro => micro_f1(predictions, gold, num_classes),
    }
}

fn center(features: &FeatureBatch) -> Result<Array1<f64>> {
    features
        .values()
        .mean_axis(Axis(0))
        .ok_or_else(|| Error::Empty("feature batch has no rows".into()))
}

/// Euclidean distance between the row means of the two batches.
pub fn domain_discrepancy(src: &FeatureBatch, tgt: &FeatureBatch) -> Result<f64> {
    if src.dim() != tgt.dim() {
        return Err(shape_err(format!("feature dim {}", src.dim()), tgt.dim()));
    }
    let diff = center(src)? - center(tgt)?;
    Ok(diff.dot(&diff).sqrt())
}

/// KL(p || q) in nats after adding `eps` to every class and renormalizing.
pub fn category_kl(p: &ClassDistribution, q: &ClassDistribution, eps: f64) -> Result<f64> {
    if p.num_classes() != q.num_classes() {
        return Err(shape_err(format!("{} classes", p.num_classes()), q.num_classes()));
    }
    let smooth = |d: &ClassDistribution| -> Vec<f64> {
        let total: f64 = d.probs().iter().map(|x| x + eps).sum();
        d.probs().iter().map(|x| (x + eps) / total).collect()
    };
    let (ps, qs) = (smooth(p), smooth(q));
    Ok(ps.iter().zip(&qs).map(|(a, b)| a * (a / b).ln()).sum())
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(shape_err(format!("{} values", xs.len()), ys.len()));
    }
    if xs.len() < 2 {
        return Err(Error::Empty("need at least two points".into()));
    }
    let (rx, ry) = (ranks(xs), ranks(ys));
    let n = xs.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        cov += (a - mx) * (b - my);
        vx += (a - mx).powi(2);
        vy += (b - my).powi(2);
    }
    if vx == 0.0 || vy == 0.0 {
        return Ok(0.0);
    }
    Ok(cov / (vx * vy).sqrt())
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

/// Which features a shift report measures.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    /// E(x).
    #[default]
    Encoder,
    /// E(x) with the thresholded mask applied.
    Masked,
}

impl std::str::FromStr for Representation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "encoder" => Ok(Self::Encoder),
            "masked" => Ok(Self::Masked),
            other => Err(Error::Config(format!("unknown representation `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftReport {
    pub domain_wise: f64,
    pub category_wise: f64,
    pub checkpoint_id: String,
    pub source_id: String,
    pub target_id: String,
}

impl ShiftReport {
    pub fn csv_header() -> &'static str {
        "pair,domain_wise,category_wise"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{}-{},{},{}",
            self.source_id, self.target_id, self.domain_wise, self.category_wise
        )
    }
}

const ENCODE_CHUNK: usize = 256;

/// Encodes documents in fixed-size chunks, optionally masking with the
/// thresholded actor output.
pub fn encode_documents(ck: &Checkpoint, docs: &[Document], repr: Representation) -> Result<FeatureBatch> {
    let dim = ck.params.encoder.feature_dim();
    let mut rows = Vec::with_capacity(docs.len() * dim);
    for chunk in docs.chunks(ENCODE_CHUNK) {
        let refs: Vec<&Document> = chunk.iter().collect();
        let batch = TokenBatch::encode(&ck.vocab, &refs, DEFAULT_MAX_LEN);
        let mut feats = ck.params.encoder.encode(&batch)?;
        if repr == Representation::Masked {
            let mask = ck.params.mask_actor.mask_probs(&feats)?.threshold();
            feats = apply_mask(&mask, &feats)?;
        }
        rows.extend(feats.values().iter().copied());
    }
    FeatureBatch::new(ndarray::Array2::from_shape_vec((docs.len(), dim), rows).map_err(|e| Error::Config(e.to_string()))?)
}

/// Domain-wise and category-wise discrepancy between a source training
/// set and a labeled target test set under `ck`'s encoder.
pub fn shift_report(
    ck: &Checkpoint,
    source: &LabeledDataset,
    target: &LabeledDataset,
    repr: Representation,
    ids: (&str, &str),
) -> Result<ShiftReport> {
    check_vocab(&ck.params.encoder, &ck.vocab)?;
    if source.is_empty() || target.is_empty() {
        return Err(Error::Empty("shift report needs documents in both domains".into()));
    }
    let src = encode_documents(ck, source.documents(), repr)?;
    let tgt = encode_documents(ck, target.documents(), repr)?;
    let domain_wise = domain_discrepancy(&src, &tgt)?;
    let p = source
        .label_distribution()
        .ok_or_else(|| Error::Schema("source set has no labels".into()))?;
    let q = target
        .label_distribution()
        .ok_or_else(|| Error::Schema("target set has no labels".into()))?;
    let category_wise = category_kl(p, q, KL_EPS)?.max(0.0);
    Ok(ShiftReport {
        domain_wise,
        category_wise,
        checkpoint_id: ck.params.encoder.fingerprint()[..16].to_string(),
        source_id: ids.0.to_string(),
        target_id: ids.1.to_string(),
    })
}

/// Final target F1 of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub method: String,
    pub seed: u64,
    pub dataset: String,
    pub target_f1: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonRow {
    pub method: String,
    pub mean: f64,
    /// Sample standard deviation; 0 for a single seed.
    pub std: f64,
    pub seeds: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonTable {
    pub dataset: String,
    pub rows: Vec<ComparisonRow>,
}

/// Mean and spread of final target F1 per method, rows sorted by name.
pub fn comparison_table(results: &[RunResult]) -> Result<ComparisonTable> {
    let first = results
        .first()
        .ok_or_else(|| Error::Empty("no runs to compare".into()))?;
    if let Some(r) = results.iter().find(|r| r.dataset != first.dataset) {
        return Err(Error::Schema(format!(
            "runs cover different datasets: `{}` and `{}`",
            first.dataset, r.dataset
        )));
    }
    let mut by_method: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for r in results {
        by_method.entry(&r.method).or_default().push(r.target_f1);
    }
    let rows = by_method
        .into_iter()
        .map(|(method, v)| {
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let std = if v.len() > 1 {
                (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            ComparisonRow {
                method: method.to_string(),
                mean,
                std,
                seeds: v.len(),
            }
        })
        .collect();
    Ok(ComparisonTable {
        dataset: first.dataset.clone(),
        rows,
    })
}

impl ComparisonTable {
    pub fn row(&self, method: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("method,dataset,target_f1_mean,target_f1_std,seeds\n");
        for r in &self.rows {
            writeln!(s, "{},{},{:.4},{:.4},{}", r.method, self.dataset, r.mean, r.std, r.seeds).unwrap();
        }
        s
    }

    pub fn to_text(&self) -> String {
        let width = self
            .rows
            .iter()
            .map(|r| r.method.len())
            .max()
            .unwrap_or(0)
            .max("method".len());
        let mut s = format!("{:<width$}  {}\n", "method", self.dataset);
        for r in &self.rows {
            writeln!(s, "{:<width$}  {:.2} ± {:.2}", r.method, r.mean, r.std).unwrap();
        }
        s
    }
}

/// Reads `method,seed,dataset,target_f1` rows, e.g. published numbers for
/// methods not implemented here.
pub fn load_external_results(path: &Path) -> Result<Vec<RunResult>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in reader.deserialize() {
        out.push(row?);
    }
    Ok(out)
}
