use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{build_vocab, Document, LabeledDataset, TokenBatch, Vocabulary};
use crate::error::{Error, Result};

/// Endless shuffled pass over `n` items, reshuffled whenever exhausted.
#[derive(Clone, Debug)]
pub(crate) struct BatchStream {
    perm: Vec<usize>,
    cursor: usize,
    rng: ChaCha8Rng,
}

impl BatchStream {
    pub fn new(n: usize, rng: ChaCha8Rng) -> Self {
        Self {
            perm: (0..n).collect(),
            cursor: n,
            rng,
        }
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn reshuffle(&mut self) {
        self.perm.shuffle(&mut self.rng);
        self.cursor = 0;
    }

    pub fn exhausted(&self) -> bool {
        self.cursor >= self.perm.len()
    }

    /// Up to `size` indices from the current pass; never crosses a pass.
    pub fn next_within_pass(&mut self, size: usize) -> Vec<usize> {
        if self.exhausted() {
            self.reshuffle();
        }
        let end = (self.cursor + size).min(self.perm.len());
        let out = self.perm[self.cursor..end].to_vec();
        self.cursor = end;
        out
    }

    /// Exactly `size` indices, continuing into a fresh pass if needed.
    pub fn next_filled(&mut self, size: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(size);
        while out.len() < size && !self.perm.is_empty() {
            let need = size - out.len();
            out.extend(self.next_within_pass(need));
        }
        out
    }
}

/// One split, tokenized once and padded to the longest document.
#[derive(Clone, Debug)]
pub struct EncodedSplit {
    pub tokens: TokenBatch,
    pub labels: Option<Vec<usize>>,
}

impl EncodedSplit {
    fn new(vocab: &Vocabulary, docs: &[&Document], labels: Option<Vec<usize>>, max_len: usize) -> Self {
        Self {
            tokens: TokenBatch::encode(vocab, docs, max_len),
            labels,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Everything the training loop reads: the shared vocabulary, source
/// train/held-out splits with labels, and the target set whose labels
/// are reachable only through `target_eval_labels`.
#[derive(Clone, Debug)]
pub struct PreparedData {
    pub vocab: Vocabulary,
    pub num_classes: usize,
    pub source_train: EncodedSplit,
    pub source_holdout: EncodedSplit,
    pub target: EncodedSplit,
    target_eval_labels: Option<Vec<usize>>,
}

impl PreparedData {
    /// Builds the vocabulary over both domains and splits off a held-out
    /// source fraction with the corpus seed.
    pub fn new(
        source: &LabeledDataset,
        target: &LabeledDataset,
        holdout_fraction: f64,
        max_len: usize,
        corpus_seed: u64,
    ) -> Result<Self> {
        if !source.is_fully_labeled() {
            return Err(Error::Schema("every source document needs a label".into()));
        }
        if target.is_empty() {
            return Err(Error::Empty("target set is empty".into()));
        }
        if source.num_classes() != target.num_classes() {
            return Err(Error::Schema(format!(
                "source has {} classes, target {}",
                source.num_classes(),
                target.num_classes()
            )));
        }
        if !(0.0..1.0).contains(&holdout_fraction) {
            return Err(Error::Config("holdout fraction must lie in [0, 1)".into()));
        }
        let target_eval_labels = target.labels_for_evaluation();
        let target = target.strip_labels();
        let vocab = build_vocab(&[source, &target], 1)?;

        let mut rng = ChaCha8Rng::seed_from_u64(corpus_seed);
        rng.set_stream(1);
        let mut order: Vec<usize> = (0..source.len()).collect();
        order.shuffle(&mut rng);
        let n_hold = (source.len() as f64 * holdout_fraction).round() as usize;
        if n_hold >= source.len() {
            return Err(Error::Empty("held-out split leaves no source training data".into()));
        }
        let (hold, train) = order.split_at(n_hold);
        let split = |idx: &[usize]| {
            let docs: Vec<&Document> = idx.iter().map(|&i| &source.documents()[i]).collect();
            let labels = docs.iter().map(|d| d.label().expect("checked above")).collect();
            EncodedSplit::new(&vocab, &docs, Some(labels), max_len)
        };
        let target_docs: Vec<&Document> = target.documents().iter().collect();
        Ok(Self {
            num_classes: source.num_classes(),
            source_train: split(train),
            source_holdout: split(hold),
            target: EncodedSplit::new(&vocab, &target_docs, None, max_len),
            target_eval_labels,
            vocab,
        })
    }

    /// Gold target labels for scoring only.
    pub fn target_eval_labels(&self) -> Option<&[usize]> {
        self.target_eval_labels.as_deref()
    }
}
