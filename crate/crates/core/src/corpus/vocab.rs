use std::collections::HashMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{Document, LabeledDataset};
use crate::error::{Error, Result};

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
const PAD_TOKEN: &str = "<pad>";
const UNK_TOKEN: &str = "<unk>";

/// Token/id mapping shared by both domains.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    id_to_token: Vec<String>,
    #[serde(skip)]
    token_to_id: HashMap<String, usize>,
}

impl Vocabulary {
    /// Builds from non-special tokens in id order (ids start at 2).
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        let mut id_to_token = vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()];
        id_to_token.extend(tokens);
        let vocab = Self {
            token_to_id: HashMap::new(),
            id_to_token,
        };
        vocab.reindexed()
    }

    fn reindexed(mut self) -> Result<Self> {
        self.token_to_id.clear();
        for (id, tok) in self.id_to_token.iter().enumerate() {
            if self.token_to_id.insert(tok.clone(), id).is_some() {
                return Err(Error::Schema(format!("duplicate vocabulary entry `{tok}`")));
            }
        }
        Ok(self)
    }

    /// Restores the lookup table after deserialization.
    pub fn rebuild_index(self) -> Result<Self> {
        self.reindexed()
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.len() <= 2
    }

    pub fn id(&self, token: &str) -> usize {
        self.token_to_id.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.token_to_id.contains_key(token)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.id_to_token.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.id_to_token
    }

    /// Token ids of a document, truncated to `max_len`.
    pub fn encode(&self, doc: &Document, max_len: usize) -> Vec<usize> {
        doc.tokens
            .iter()
            .take(max_len)
            .map(|t| self.id(t))
            .collect()
    }

    /// A hex digest identifying the vocabulary contents.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for t in &self.id_to_token {
            h.update(t.as_bytes());
            h.update([0u8]);
        }
        hex::encode(h.finalize())
    }
}

/// Shared vocabulary over all datasets. Tokens with frequency below
/// `min_freq` map to the unknown id. Ordered by frequency, then token.
pub fn build_vocab(datasets: &[&LabeledDataset], min_freq: usize) -> Result<Vocabulary> {
    let mut freq: HashMap<&str, usize> = HashMap::new();
    for ds in datasets {
        for doc in ds.documents() {
            for t in &doc.tokens {
                *freq.entry(t.as_str()).or_default() += 1;
            }
        }
    }
    if freq.is_empty() {
        return Err(Error::Empty("corpus has no tokens".into()));
    }
    let mut entries: Vec<(&str, usize)> = freq
        .into_iter()
        .filter(|&(t, c)| c >= min_freq.max(1) && t != PAD_TOKEN && t != UNK_TOKEN)
        .collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    Vocabulary::from_tokens(entries.into_iter().map(|(t, _)| t.to_string()).collect())
}

/// Padded token-id matrix with per-row lengths.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenBatch {
    pub ids: Array2<usize>,
    pub lengths: Vec<usize>,
}

impl TokenBatch {
    /// Pads sequences with [`PAD_ID`] to the longest one.
    pub fn from_sequences(seqs: &[Vec<usize>]) -> Self {
        let width = seqs.iter().map(Vec::len).max().unwrap_or(0);
        let mut ids = Array2::from_elem((seqs.len(), width), PAD_ID);
        for (i, s) in seqs.iter().enumerate() {
            for (j, &id) in s.iter().enumerate() {
                ids[[i, j]] = id;
            }
        }
        Self {
            ids,
            lengths: seqs.iter().map(Vec::len).collect(),
        }
    }

    pub fn encode(vocab: &Vocabulary, docs: &[&Document], max_len: usize) -> Self {
        let seqs: Vec<Vec<usize>> = docs.iter().map(|d| vocab.encode(d, max_len)).collect();
        Self::from_sequences(&seqs)
    }

    pub fn len(&self) -> usize {
        self.lengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lengths.is_empty()
    }

    pub fn width(&self) -> usize {
        self.ids.ncols()
    }

    /// Rows in the given order.
    pub fn select(&self, rows: &[usize]) -> Self {
        let width = rows.iter().map(|&r| self.lengths[r]).max().unwrap_or(0);
        let mut ids = Array2::from_elem((rows.len(), width), PAD_ID);
        for (i, &r) in rows.iter().enumerate() {
            for j in 0..self.lengths[r] {
                ids[[i, j]] = self.ids[[r, j]];
            }
        }
        Self {
            ids,
            lengths: rows.iter().map(|&r| self.lengths[r]).collect(),
        }
    }

    pub fn check_range(&self, vocab_size: usize) -> Result<()> {
        match self.ids.iter().find(|&&id| id >= vocab_size) {
            Some(&id) => Err(Error::TokenOutOfRange { id, vocab_size }),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Domain, LabelMap};

    fn dataset(texts: &[&str], domain: Domain) -> LabeledDataset {
        let docs = texts
            .iter()
            .map(|t| Document::new(*t, None, domain).unwrap())
            .collect();
        LabeledDataset::new(docs, LabelMap::numeric(2), domain).unwrap()
    }

    #[test]
    fn min_freq_one_keeps_every_token() {
        let ds = dataset(&["a a b"], Domain::Source);
        let v = build_vocab(&[&ds], 1).unwrap();
        assert_eq!(v.tokens(), &["<pad>", "<unk>", "a", "b"]);
        assert_eq!(v.id("<pad>"), PAD_ID);
    }

    #[test]
    fn min_freq_two_sends_rare_tokens_to_unknown() {
        let ds = dataset(&["a a b"], Domain::Source);
        let v = build_vocab(&[&ds], 2).unwrap();
        assert_eq!(v.len(), 3);
        assert_eq!(v.id("a"), 2);
        assert_eq!(v.id("b"), UNK_ID);
    }

    #[test]
    fn shared_token_gets_one_id_across_domains() {
        let s = dataset(&["x y"], Domain::Source);
        let t = dataset(&["x z"], Domain::Target);
        let v = build_vocab(&[&s, &t], 1).unwrap();
        assert_eq!(v.tokens(), &["<pad>", "<unk>", "x", "y", "z"]);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        let empty = LabeledDataset::new(vec![], LabelMap::numeric(2), Domain::Source).unwrap();
        assert!(matches!(build_vocab(&[&empty], 1), Err(Error::Empty(_))));
    }

    #[test]
    fn batch_pads_with_zero() {
        let b = TokenBatch::from_sequences(&[vec![3, 4, 5], vec![6]]);
        assert_eq!(b.ids.row(1).to_vec(), vec![6, PAD_ID, PAD_ID]);
        assert_eq!(b.lengths, vec![3, 1]);
        let s = b.select(&[1]);
        assert_eq!(s.width(), 1);
    }
}
