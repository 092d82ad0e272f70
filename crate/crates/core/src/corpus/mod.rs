//! Documents, labeled datasets, vocabularies and the corpus operations that
//! feed training: file loading, class-imbalanced splitting and synthetic
//! shifted domain pairs.

mod io;
mod split;
mod synth;
mod tokenize;
mod vocab;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{load_dataset, write_jsonl, DataFormat};
pub use split::{largest_remainder_counts, make_imbalanced_split};
pub use synth::{synth_domain_pair, SynthConfig};
pub use tokenize::tokenize;
pub use vocab::{build_vocab, TokenBatch, Vocabulary, PAD_ID, UNK_ID};

/// Default truncation length for token sequences.
pub const DEFAULT_MAX_LEN: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Source,
    Target,
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Domain::Source => f.write_str("source"),
            Domain::Target => f.write_str("target"),
        }
    }
}

impl std::str::FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "source" => Ok(Domain::Source),
            "target" => Ok(Domain::Target),
            other => Err(Error::Config(format!("unknown domain `{other}`"))),
        }
    }
}

/// A single tokenized text.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub text: String,
    pub tokens: Vec<String>,
    label: Option<usize>,
    pub domain: Domain,
}

impl Document {
    /// Tokenizes `text`. Fails if the text yields no tokens.
    pub fn new(text: impl Into<String>, label: Option<usize>, domain: Domain) -> Result<Self> {
        let text = text.into();
        let tokens = tokenize(&text);
        if tokens.is_empty() {
            return Err(Error::Schema(format!("document `{text}` has no tokens")));
        }
        Ok(Self {
            text,
            tokens,
            label,
            domain,
        })
    }

    /// The class id. Target-domain labels are only meant to be read by
    /// evaluation code; training code receives stripped copies.
    pub fn label(&self) -> Option<usize> {
        self.label
    }
}

/// A probability vector over classes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassDistribution {
    probs: Vec<f64>,
}

impl ClassDistribution {
    pub const TOLERANCE: f64 = 1e-9;

    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Empty("class distribution".into()));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0 || *p > 1.0) {
            return Err(Error::Config(format!(
                "class probabilities must lie in [0, 1]: {probs:?}"
            )));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > Self::TOLERANCE {
            return Err(Error::Config(format!(
                "class probabilities sum to {total}, expected 1"
            )));
        }
        Ok(Self { probs })
    }

    pub fn uniform(num_classes: usize) -> Self {
        Self {
            probs: vec![1.0 / num_classes as f64; num_classes],
        }
    }

    /// Normalizes raw class counts. Returns `None` when all counts are zero.
    pub fn from_counts(counts: &[usize]) -> Option<Self> {
        let total: usize = counts.iter().sum();
        if total == 0 {
            return None;
        }
        Some(Self {
            probs: counts.iter().map(|&c| c as f64 / total as f64).collect(),
        })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn num_classes(&self) -> usize {
        self.probs.len()
    }
}

/// Ordered class names; the position of a name is its class id.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMap {
    names: Vec<String>,
}

impl LabelMap {
    pub fn new(names: Vec<String>) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::Empty("label map".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for n in &names {
            if !seen.insert(n) {
                return Err(Error::Schema(format!("duplicate label `{n}`")));
            }
        }
        Ok(Self { names })
    }

    /// Labels named `0..num_classes`.
    pub fn numeric(num_classes: usize) -> Self {
        Self {
            names: (0..num_classes).map(|i| i.to_string()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.names.get(id).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// String-to-id mapping, as written to label sidecar files.
    pub fn to_json_map(&self) -> BTreeMap<String, usize> {
        self.names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i))
            .collect()
    }
}

/// Documents from one domain, with the label distribution of the labeled ones.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    documents: Vec<Document>,
    label_map: LabelMap,
    domain: Domain,
    label_distribution: Option<ClassDistribution>,
}

impl LabeledDataset {
    pub fn new(documents: Vec<Document>, label_map: LabelMap, domain: Domain) -> Result<Self> {
        let num_classes = label_map.len();
        let mut counts = vec![0usize; num_classes];
        for (i, doc) in documents.iter().enumerate() {
            if doc.domain != domain {
                return Err(Error::Schema(format!(
                    "document {i} is tagged {} in a {domain} dataset",
                    doc.domain
                )));
            }
            if let Some(label) = doc.label {
                if label >= num_classes {
                    return Err(Error::Schema(format!(
                        "document {i} has label {label}, but there are {num_classes} classes"
                    )));
                }
                counts[label] += 1;
            }
        }
        Ok(Self {
            documents,
            label_map,
            domain,
            label_distribution: ClassDistribution::from_counts(&counts),
        })
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.label_map.len()
    }

    pub fn label_map(&self) -> &LabelMap {
        &self.label_map
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    /// `None` when no document carries a label.
    pub fn label_distribution(&self) -> Option<&ClassDistribution> {
        self.label_distribution.as_ref()
    }

    /// True when every document is labeled.
    pub fn is_fully_labeled(&self) -> bool {
        !self.documents.is_empty() && self.documents.iter().all(|d| d.label.is_some())
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes()];
        for d in &self.documents {
            if let Some(l) = d.label {
                counts[l] += 1;
            }
        }
        counts
    }

    /// Gold labels in document order; the only sanctioned way for
    /// evaluation code to read target-domain labels.
    pub fn labels_for_evaluation(&self) -> Option<Vec<usize>> {
        self.documents.iter().map(|d| d.label).collect()
    }

    /// A copy with every label removed, as handed to training code paths.
    pub fn strip_labels(&self) -> Self {
        let documents = self
            .documents
            .iter()
            .map(|d| Document {
                label: None,
                ..d.clone()
            })
            .collect();
        Self {
            documents,
            label_map: self.label_map.clone(),
            domain: self.domain,
            label_distribution: None,
        }
    }

    /// Subset by document index, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let documents = indices
            .iter()
            .map(|&i| {
                self.documents
                    .get(i)
                    .cloned()
                    .ok_or_else(|| Error::Schema(format!("index {i} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(documents, self.label_map.clone(), self.domain)
    }
}
