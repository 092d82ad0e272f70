//! The five trainable components (encoder, classifier, domain discriminator,
//! mask actor, critic), the batch types flowing between them, and
//! checkpoints.
//!
//! Every component exposes a forward pass and a hand-written backward pass
//! that accumulates gradients into a zero-initialized value of its own type.

mod checkpoint;
mod encoder;
mod heads;
mod mask;
mod params;

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};

pub use checkpoint::Checkpoint;
pub use encoder::{
    check_vocab, BagEncoder, BiLstmEncoder, Encoder, EncoderCache, EncoderConfig, EncoderKind,
    LstmCell,
};
pub use heads::{Classifier, Critic, Discriminator, MaskActor, TwoLayer, TwoLayerCache};
pub use mask::{apply_mask, sample_mask};
pub use params::{Linear, Parameterized};

pub(crate) use params::{sigmoid, softplus};

/// Lower/upper clamp on mask probabilities.
pub const MASK_EPS: f64 = 1e-6;

/// Encoder outputs, one row per document.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureBatch {
    values: Array2<f64>,
}

impl FeatureBatch {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                message: "feature batch has non-finite entries".into(),
                snapshot: None,
            });
        }
        Ok(Self { values })
    }

    pub(crate) fn new_unchecked(values: Array2<f64>) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    /// Stacks two batches row-wise.
    pub fn concat(&self, other: &FeatureBatch) -> Result<FeatureBatch> {
        if self.dim() != other.dim() {
            return Err(shape_err(self.dim(), other.dim()));
        }
        let values = ndarray::concatenate(Axis(0), &[self.values.view(), other.values.view()])
            .expect("matching widths");
        Ok(FeatureBatch { values })
    }

    pub(crate) fn check_dim(&self, dim: usize) -> Result<()> {
        if self.dim() != dim {
            return Err(shape_err(format!("feature dim {dim}"), format!("feature dim {}", self.dim())));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassMode {
    #[default]
    Softmax,
    MultilabelSigmoid,
}

impl std::str::FromStr for ClassMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "softmax" => Ok(Self::Softmax),
            "multilabel" | "multilabel-sigmoid" => Ok(Self::MultilabelSigmoid),
            other => Err(Error::Config(format!("unknown class mode `{other}`"))),
        }
    }
}

/// Classifier output probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassProbs {
    pub values: Array2<f64>,
    pub mode: ClassMode,
}

impl ClassProbs {
    /// Row-wise softmax or element-wise sigmoid of logits.
    pub fn from_logits(logits: &Array2<f64>, mode: ClassMode) -> Self {
        let values = match mode {
            ClassMode::Softmax => softmax_rows(logits),
            ClassMode::MultilabelSigmoid => logits.mapv(sigmoid),
        };
        Self { values, mode }
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    /// Arg-max per row (ties to the lowest class). In multilabel mode this is
    /// the most probable class; see [`ClassProbs::multilabel_sets`].
    pub fn hard_labels(&self) -> Vec<usize> {
        self.values
            .rows()
            .into_iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (i, &v)| {
                        if v > best.1 {
                            (i, v)
                        } else {
                            best
                        }
                    })
                    .0
            })
            .collect()
    }

    /// Per-class 0.5 threshold decisions.
    pub fn multilabel_sets(&self) -> Vec<Vec<usize>> {
        self.values
            .rows()
            .into_iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .filter(|(_, &p)| p >= 0.5)
                    .map(|(i, _)| i)
                    .collect()
            })
            .collect()
    }
}

pub(crate) fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    out
}

/// Probability that each row comes from the source domain.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainProbs {
    pub values: Array1<f64>,
}

impl DomainProbs {
    pub fn from_logits(logits: &Array1<f64>) -> Self {
        let lo = f64::EPSILON;
        Self {
            values: logits.mapv(|z| sigmoid(z).clamp(lo, 1.0 - lo)),
        }
    }
}

/// Per-feature keep probabilities, clamped to `[MASK_EPS, 1 - MASK_EPS]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskProbs {
    values: Array2<f64>,
}

impl MaskProbs {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values
            .iter()
            .any(|p| !(MASK_EPS..=1.0 - MASK_EPS).contains(p))
        {
            return Err(Error::Config("mask probabilities must lie in [eps, 1 - eps]".into()));
        }
        Ok(Self { values })
    }

    pub(crate) fn from_logits(logits: &Array2<f64>) -> Self {
        Self {
            values: logits.mapv(|z| sigmoid(z).clamp(MASK_EPS, 1.0 - MASK_EPS)),
        }
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    /// Keep every feature whose probability is at least 0.5.
    pub fn threshold(&self) -> MaskMatrix {
        MaskMatrix {
            values: self.values.mapv(|p| if p >= 0.5 { 1.0 } else { 0.0 }),
        }
    }

    /// `sum_j p log p + (1 - p) log(1 - p)` per row: the negative Bernoulli entropy.
    pub fn neg_entropy(&self) -> Array1<f64> {
        self.values
            .map_axis(Axis(1), |row| row.iter().map(|&p| p * p.ln() + (1.0 - p) * (1.0 - p).ln()).sum())
    }

    /// `log pi(mask | probs) = sum_j m log p + (1 - m) log(1 - p)` per row.
    pub fn log_prob(&self, mask: &MaskMatrix) -> Result<Array1<f64>> {
        if mask.values.dim() != self.values.dim() {
            return Err(shape_err(format!("{:?}", self.values.dim()), format!("{:?}", mask.values.dim())));
        }
        let mut out = Array1::zeros(self.values.nrows());
        for ((i, j), &p) in self.values.indexed_iter() {
            let m = mask.values[[i, j]];
            out[i] += m * p.ln() + (1.0 - m) * (1.0 - p).ln();
        }
        Ok(out)
    }
}

/// Binary keep/drop actions.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskMatrix {
    values: Array2<f64>,
}

impl MaskMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::Config("mask entries must be 0 or 1".into()));
        }
        Ok(Self { values })
    }

    pub fn ones(rows: usize, cols: usize) -> Self {
        Self {
            values: Array2::ones((rows, cols)),
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            values: Array2::zeros((rows, cols)),
        }
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn dim(&self) -> (usize, usize) {
        self.values.dim()
    }

    /// Fraction of kept entries over the whole matrix.
    pub fn density(&self) -> f64 {
        self.values.mean().unwrap_or(0.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub num_classes: usize,
    pub class_mode: ClassMode,
    pub disc_hidden: usize,
    pub critic_hidden: usize,
}

impl ModelConfig {
    /// Discriminator and critic widths default to half the feature size.
    pub fn new(encoder: EncoderConfig, num_classes: usize) -> Self {
        let half = (encoder.feature_dim / 2).max(1);
        Self {
            encoder,
            num_classes,
            class_mode: ClassMode::Softmax,
            disc_hidden: half,
            critic_hidden: half,
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.encoder.feature_dim
    }
}

/// Names of the parameter groups, in checkpoint order.
pub const GROUP_NAMES: [&str; 5] = ["encoder", "classifier", "discriminator", "mask_actor", "critic"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterSet {
    pub encoder: Encoder,
    pub classifier: Classifier,
    pub discriminator: Discriminator,
    pub mask_actor: MaskActor,
    pub critic: Critic,
}

impl ParameterSet {
    pub fn new<R: Rng>(config: &ModelConfig, rng: &mut R) -> Result<Self> {
        if config.num_classes < 2 {
            return Err(Error::Config("need at least two classes".into()));
        }
        let d = config.feature_dim();
        Ok(Self {
            encoder: Encoder::new(&config.encoder, rng)?,
            classifier: Classifier::new(rng, d, config.num_classes, config.class_mode),
            discriminator: Discriminator::new(rng, d, config.disc_hidden),
            mask_actor: MaskActor::new(rng, d),
            critic: Critic::new(rng, d, config.critic_hidden),
        })
    }

    pub fn group(&self, name: &str) -> Option<&dyn Parameterized> {
        Some(match name {
            "encoder" => &self.encoder,
            "classifier" => &self.classifier,
            "discriminator" => &self.discriminator,
            "mask_actor" => &self.mask_actor,
            "critic" => &self.critic,
            _ => return None,
        })
    }

    /// `(group name, fingerprint)` for every group.
    pub fn fingerprints(&self) -> Vec<(&'static str, String)> {
        GROUP_NAMES
            .iter()
            .map(|&n| (n, self.group(n).expect("known group").fingerprint()))
            .collect()
    }

    pub fn all_finite(&self) -> bool {
        GROUP_NAMES
            .iter()
            .all(|&n| self.group(n).expect("known group").all_finite())
    }
}
