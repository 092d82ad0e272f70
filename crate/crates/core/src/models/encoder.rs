//! Document encoders mapping padded token ids to pooled feature rows.

use std::io::BufRead;
use std::path::Path;

use ndarray::{s, Array2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::{sigmoid, slice_of, slice_of_mut, uniform_init, uniform_init_vec, Linear, Parameterized};
use super::FeatureBatch;
use crate::corpus::{TokenBatch, Vocabulary};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EncoderKind {
    /// Mean of token embeddings, projected to the feature dimension.
    BagOfEmbeddings,
    /// Bidirectional LSTM; final states of both directions are concatenated
    /// and projected to the feature dimension.
    BiLstm,
}

impl std::str::FromStr for EncoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bag" | "bag-of-embeddings" => Ok(Self::BagOfEmbeddings),
            "bilstm" | "bi-lstm" => Ok(Self::BiLstm),
            other => Err(Error::Config(format!("unknown encoder `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub kind: EncoderKind,
    pub vocab_size: usize,
    pub embed_dim: usize,
    /// LSTM hidden units per direction. Unused by the bag encoder.
    pub hidden_dim: usize,
    pub feature_dim: usize,
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 2 || self.embed_dim == 0 || self.feature_dim == 0 {
            return Err(Error::Config(format!("degenerate encoder config {self:?}")));
        }
        if self.kind == EncoderKind::BiLstm && self.hidden_dim == 0 {
            return Err(Error::Config("hidden_dim must be positive".into()));
        }
        Ok(())
    }
}

/// Cached activations needed by the backward pass.
pub enum EncoderCache {
    Bag {
        pooled: Array2<f64>,
        out: Array2<f64>,
    },
    BiLstm {
        fwd: LstmTrace,
        bwd: LstmTrace,
        finals: Array2<f64>,
        out: Array2<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Encoder {
    BagOfEmbeddings(BagEncoder),
    BiLstm(BiLstmEncoder),
}

impl Encoder {
    pub fn new<R: Rng>(config: &EncoderConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        Ok(match config.kind {
            EncoderKind::BagOfEmbeddings => Encoder::BagOfEmbeddings(BagEncoder::new(config, rng)),
            EncoderKind::BiLstm => Encoder::BiLstm(BiLstmEncoder::new(config, rng)),
        })
    }

    pub fn kind(&self) -> EncoderKind {
        match self {
            Encoder::BagOfEmbeddings(_) => EncoderKind::BagOfEmbeddings,
            Encoder::BiLstm(_) => EncoderKind::BiLstm,
        }
    }

    pub fn embeddings(&self) -> &Array2<f64> {
        match self {
            Encoder::BagOfEmbeddings(e) => &e.embedding,
            Encoder::BiLstm(e) => &e.embedding,
        }
    }

    pub fn embeddings_mut(&mut self) -> &mut Array2<f64> {
        match self {
            Encoder::BagOfEmbeddings(e) => &mut e.embedding,
            Encoder::BiLstm(e) => &mut e.embedding,
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.embeddings().nrows()
    }

    pub fn feature_dim(&self) -> usize {
        match self {
            Encoder::BagOfEmbeddings(e) => e.proj.output_dim(),
            Encoder::BiLstm(e) => e.proj.output_dim(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        match self {
            Encoder::BagOfEmbeddings(e) => Encoder::BagOfEmbeddings(e.zeros_like()),
            Encoder::BiLstm(e) => Encoder::BiLstm(e.zeros_like()),
        }
    }

    pub fn encode(&self, batch: &TokenBatch) -> Result<FeatureBatch> {
        Ok(self.forward(batch)?.0)
    }

    pub fn forward(&self, batch: &TokenBatch) -> Result<(FeatureBatch, EncoderCache)> {
        batch.check_range(self.vocab_size())?;
        Ok(match self {
            Encoder::BagOfEmbeddings(e) => e.forward(batch),
            Encoder::BiLstm(e) => e.forward(batch),
        })
    }

    /// Accumulates gradients for `d_features` into `grad` (same variant).
    pub fn backward(
        &self,
        batch: &TokenBatch,
        cache: &EncoderCache,
        d_features: &Array2<f64>,
        grad: &mut Encoder,
    ) -> Result<()> {
        match (self, cache, grad) {
            (Encoder::BagOfEmbeddings(e), EncoderCache::Bag { pooled, out }, Encoder::BagOfEmbeddings(g)) => {
                e.backward(batch, pooled, out, d_features, g);
                Ok(())
            }
            (
                Encoder::BiLstm(e),
                EncoderCache::BiLstm {
                    fwd,
                    bwd,
                    finals,
                    out,
                },
                Encoder::BiLstm(g),
            ) => {
                e.backward(batch, fwd, bwd, finals, out, d_features, g);
                Ok(())
            }
            _ => Err(Error::Config("encoder, cache and gradient variants differ".into())),
        }
    }

    /// Overwrites embedding rows with vectors from a whitespace-separated
    /// text file (`token v1 v2 ...`, GloVe layout). Returns how many
    /// vocabulary entries were found.
    pub fn load_pretrained(&mut self, vocab: &Vocabulary, path: &Path) -> Result<usize> {
        let dim = self.embeddings().ncols();
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut found = 0;
        let table = self.embeddings_mut();
        for (i, line) in file.lines().enumerate() {
            let line = line?;
            let mut parts = line.split_whitespace();
            let Some(token) = parts.next() else { continue };
            if !vocab.contains(token) {
                continue;
            }
            let values = parts
                .map(str::parse::<f64>)
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: e.to_string(),
                })?;
            if values.len() != dim {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: format!("expected {dim} values, found {}", values.len()),
                });
            }
            let id = vocab.id(token);
            table.row_mut(id).assign(&ndarray::ArrayView1::from(&values));
            found += 1;
        }
        Ok(found)
    }
}

impl Parameterized for Encoder {
    fn visit(&self, f: &mut dyn FnMut(&str, &[f64])) {
        match self {
            Encoder::BagOfEmbeddings(e) => e.visit(f),
            Encoder::BiLstm(e) => e.visit(f),
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        match self {
            Encoder::BagOfEmbeddings(e) => e.visit_mut(f),
            Encoder::BiLstm(e) => e.visit_mut(f),
        }
    }
}

fn embedding_table<R: Rng>(rng: &mut R, vocab: usize, dim: usize) -> Array2<f64> {
    // One-hot input, so fan-in is 1.
    uniform_init(rng, (vocab, dim), 1)
}

// ---------------------------------------------------------------------------
// Bag of embeddings
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BagEncoder {
    pub embedding: Array2<f64>,
    pub proj: Linear,
}

impl BagEncoder {
    fn new<R: Rng>(config: &EncoderConfig, rng: &mut R) -> Self {
        Self {
            embedding: embedding_table(rng, config.vocab_size, config.embed_dim),
            proj: Linear::new(rng, config.embed_dim, config.feature_dim),
        }
    }

    fn zeros_like(&self) -> Self {
        Self {
            embedding: Array2::zeros(self.embedding.raw_dim()),
            proj: self.proj.zeros_like(),
        }
    }

    fn forward(&self, batch: &TokenBatch) -> (FeatureBatch, EncoderCache) {
        let dim = self.embedding.ncols();
        let mut pooled = Array2::zeros((batch.len(), dim));
        for (i, &len) in batch.lengths.iter().enumerate() {
            if len == 0 {
                continue;
            }
            let mut row = pooled.row_mut(i);
            for t in 0..len {
                row += &self.embedding.row(batch.ids[[i, t]]);
            }
            row /= len as f64;
        }
        let out = self.proj.forward(&pooled).mapv_into(f64::tanh);
        (
            FeatureBatch::new_unchecked(out.clone()),
            EncoderCache::Bag { pooled, out },
        )
    }

    fn backward(
        &self,
        batch: &TokenBatch,
        pooled: &Array2<f64>,
        out: &Array2<f64>,
        d_out: &Array2<f64>,
        grad: &mut BagEncoder,
    ) {
        let d_pre = d_out * &out.mapv(|h| 1.0 - h * h);
        let d_pooled = self.proj.backward(pooled, &d_pre, &mut grad.proj);
        for (i, &len) in batch.lengths.iter().enumerate() {
            if len == 0 {
                continue;
            }
            let scaled = &d_pooled.row(i) / len as f64;
            for t in 0..len {
                let mut g = grad.embedding.row_mut(batch.ids[[i, t]]);
                g += &scaled;
            }
        }
    }
}

impl Parameterized for BagEncoder {
    fn visit(&self, f: &mut dyn FnMut(&str, &[f64])) {
        f("embedding", slice_of(&self.embedding));
        self.proj.visit_prefixed("proj", f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        f("embedding", slice_of_mut(&mut self.embedding));
        self.proj.visit_prefixed_mut("proj", f);
    }
}

// ---------------------------------------------------------------------------
// Bidirectional LSTM
// ---------------------------------------------------------------------------

/// One LSTM direction. Gate blocks are ordered input, forget, cell, output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LstmCell {
    pub w_input: Array2<f64>,
    pub w_hidden: Array2<f64>,
    pub bias: ndarray::Array1<f64>,
}

struct LstmStep {
    x: Array2<f64>,
    h_prev: Array2<f64>,
    c_prev: Array2<f64>,
    gates: Array2<f64>,
    tanh_c: Array2<f64>,
    active: Vec<bool>,
}

/// Per-step activations of one direction.
pub struct LstmTrace {
    steps: Vec<LstmStep>,
    token_ids: Vec<Vec<usize>>,
}

impl LstmCell {
    fn new<R: Rng>(rng: &mut R, input: usize, hidden: usize) -> Self {
        Self {
            w_input: uniform_init(rng, (4 * hidden, input), hidden),
            w_hidden: uniform_init(rng, (4 * hidden, hidden), hidden),
            bias: uniform_init_vec(rng, 4 * hidden, hidden),
        }
    }

    fn zeros_like(&self) -> Self {
        Self {
            w_input: Array2::zeros(self.w_input.raw_dim()),
            w_hidden: Array2::zeros(self.w_hidden.raw_dim()),
            bias: ndarray::Array1::zeros(self.bias.len()),
        }
    }

    fn hidden(&self) -> usize {
        self.w_hidden.ncols()
    }

    /// Runs over `sequences` (token ids in processing order); returns the
    /// final hidden state per row.
    fn run(&self, embedding: &Array2<f64>, sequences: Vec<Vec<usize>>) -> (Array2<f64>, LstmTrace) {
        let n = sequences.len();
        let hd = self.hidden();
        let steps_needed = sequences.iter().map(Vec::len).max().unwrap_or(0);
        let mut h = Array2::zeros((n, hd));
        let mut c = Array2::zeros((n, hd));
        let mut steps = Vec::with_capacity(steps_needed);
        for t in 0..steps_needed {
            let active: Vec<bool> = sequences.iter().map(|s| t < s.len()).collect();
            let mut x = Array2::zeros((n, embedding.ncols()));
            for (i, seq) in sequences.iter().enumerate() {
                if let Some(&id) = seq.get(t) {
                    x.row_mut(i).assign(&embedding.row(id));
                }
            }
            let mut gates = x.dot(&self.w_input.t()) + h.dot(&self.w_hidden.t()) + &self.bias;
            gates.slice_mut(s![.., 0..2 * hd]).mapv_inplace(sigmoid);
            gates.slice_mut(s![.., 2 * hd..3 * hd]).mapv_inplace(f64::tanh);
            gates.slice_mut(s![.., 3 * hd..]).mapv_inplace(sigmoid);

            let i_g = gates.slice(s![.., 0..hd]);
            let f_g = gates.slice(s![.., hd..2 * hd]);
            let g_g = gates.slice(s![.., 2 * hd..3 * hd]);
            let o_g = gates.slice(s![.., 3 * hd..]);
            let c_new = &f_g * &c + &i_g * &g_g;
            let tanh_c = c_new.mapv(f64::tanh);
            let h_new = &o_g * &tanh_c;

            let h_prev = h.clone();
            let c_prev = c.clone();
            for (i, &a) in active.iter().enumerate() {
                if a {
                    h.row_mut(i).assign(&h_new.row(i));
                    c.row_mut(i).assign(&c_new.row(i));
                }
            }
            steps.push(LstmStep {
                x,
                h_prev,
                c_prev,
                gates,
                tanh_c,
                active,
            });
        }
        (
            h,
            LstmTrace {
                steps,
                token_ids: sequences,
            },
        )
    }

    fn backward(
        &self,
        trace: &LstmTrace,
        d_final: Array2<f64>,
        grad: &mut LstmCell,
        d_embedding: &mut Array2<f64>,
    ) {
        let hd = self.hidden();
        let n = d_final.nrows();
        let mut dh = d_final;
        let mut dc: Array2<f64> = Array2::zeros((n, hd));
        for (t, step) in trace.steps.iter().enumerate().rev() {
            let i_g = step.gates.slice(s![.., 0..hd]);
            let f_g = step.gates.slice(s![.., hd..2 * hd]);
            let g_g = step.gates.slice(s![.., 2 * hd..3 * hd]);
            let o_g = step.gates.slice(s![.., 3 * hd..]);

            let dc_total = &dc + &(&dh * &o_g * &step.tanh_c.mapv(|v| 1.0 - v * v));
            let mut d_pre = Array2::zeros((n, 4 * hd));
            Zip::from(d_pre.slice_mut(s![.., 0..hd]))
                .and(&dc_total)
                .and(&g_g)
                .and(&i_g)
                .for_each(|d, &dct, &g, &i| *d = dct * g * i * (1.0 - i));
            Zip::from(d_pre.slice_mut(s![.., hd..2 * hd]))
                .and(&dc_total)
                .and(&step.c_prev)
                .and(&f_g)
                .for_each(|d, &dct, &cp, &f| *d = dct * cp * f * (1.0 - f));
            Zip::from(d_pre.slice_mut(s![.., 2 * hd..3 * hd]))
                .and(&dc_total)
                .and(&i_g)
                .and(&g_g)
                .for_each(|d, &dct, &i, &g| *d = dct * i * (1.0 - g * g));
            Zip::from(d_pre.slice_mut(s![.., 3 * hd..]))
                .and(&dh)
                .and(&step.tanh_c)
                .and(&o_g)
                .for_each(|d, &dhv, &tc, &o| *d = dhv * tc * o * (1.0 - o));
            for (i, &a) in step.active.iter().enumerate() {
                if !a {
                    d_pre.row_mut(i).fill(0.0);
                }
            }

            grad.w_input += &d_pre.t().dot(&step.x);
            grad.w_hidden += &d_pre.t().dot(&step.h_prev);
            grad.bias += &d_pre.sum_axis(Axis(0));
            let dx = d_pre.dot(&self.w_input);
            let dh_prev = d_pre.dot(&self.w_hidden);
            let dc_prev = &dc_total * &f_g;

            for (i, &a) in step.active.iter().enumerate() {
                if a {
                    let id = trace.token_ids[i][t];
                    let mut row = d_embedding.row_mut(id);
                    row += &dx.row(i);
                    dh.row_mut(i).assign(&dh_prev.row(i));
                    dc.row_mut(i).assign(&dc_prev.row(i));
                }
            }
        }
    }

    fn visit_prefixed(&self, p: &str, f: &mut dyn FnMut(&str, &[f64])) {
        f(&format!("{p}.w_input"), slice_of(&self.w_input));
        f(&format!("{p}.w_hidden"), slice_of(&self.w_hidden));
        f(&format!("{p}.bias"), slice_of(&self.bias));
    }

    fn visit_prefixed_mut(&mut self, p: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        f(&format!("{p}.w_input"), slice_of_mut(&mut self.w_input));
        f(&format!("{p}.w_hidden"), slice_of_mut(&mut self.w_hidden));
        f(&format!("{p}.bias"), slice_of_mut(&mut self.bias));
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiLstmEncoder {
    pub embedding: Array2<f64>,
    pub forward_cell: LstmCell,
    pub backward_cell: LstmCell,
    pub proj: Linear,
}

impl BiLstmEncoder {
    fn new<R: Rng>(config: &EncoderConfig, rng: &mut R) -> Self {
        Self {
            embedding: embedding_table(rng, config.vocab_size, config.embed_dim),
            forward_cell: LstmCell::new(rng, config.embed_dim, config.hidden_dim),
            backward_cell: LstmCell::new(rng, config.embed_dim, config.hidden_dim),
            proj: Linear::new(rng, 2 * config.hidden_dim, config.feature_dim),
        }
    }

    fn zeros_like(&self) -> Self {
        Self {
            embedding: Array2::zeros(self.embedding.raw_dim()),
            forward_cell: self.forward_cell.zeros_like(),
            backward_cell: self.backward_cell.zeros_like(),
            proj: self.proj.zeros_like(),
        }
    }

    fn forward(&self, batch: &TokenBatch) -> (FeatureBatch, EncoderCache) {
        let seqs: Vec<Vec<usize>> = batch
            .lengths
            .iter()
            .enumerate()
            .map(|(i, &len)| (0..len).map(|t| batch.ids[[i, t]]).collect())
            .collect();
        let reversed: Vec<Vec<usize>> = seqs
            .iter()
            .map(|s| s.iter().rev().copied().collect())
            .collect();
        let (h_fwd, fwd) = self.forward_cell.run(&self.embedding, seqs);
        let (h_bwd, bwd) = self.backward_cell.run(&self.embedding, reversed);
        let finals = ndarray::concatenate(Axis(1), &[h_fwd.view(), h_bwd.view()])
            .expect("same row count");
        let out = self.proj.forward(&finals).mapv_into(f64::tanh);
        (
            FeatureBatch::new_unchecked(out.clone()),
            EncoderCache::BiLstm {
                fwd,
                bwd,
                finals,
                out,
            },
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn backward(
        &self,
        _batch: &TokenBatch,
        fwd: &LstmTrace,
        bwd: &LstmTrace,
        finals: &Array2<f64>,
        out: &Array2<f64>,
        d_out: &Array2<f64>,
        grad: &mut BiLstmEncoder,
    ) {
        let hd = self.forward_cell.hidden();
        let d_pre = d_out * &out.mapv(|h| 1.0 - h * h);
        let d_finals = self.proj.backward(finals, &d_pre, &mut grad.proj);
        let d_fwd = d_finals.slice(s![.., 0..hd]).to_owned();
        let d_bwd = d_finals.slice(s![.., hd..]).to_owned();
        self.forward_cell
            .backward(fwd, d_fwd, &mut grad.forward_cell, &mut grad.embedding);
        self.backward_cell
            .backward(bwd, d_bwd, &mut grad.backward_cell, &mut grad.embedding);
    }
}

impl Parameterized for BiLstmEncoder {
    fn visit(&self, f: &mut dyn FnMut(&str, &[f64])) {
        f("embedding", slice_of(&self.embedding));
        self.forward_cell.visit_prefixed("lstm_fwd", f);
        self.backward_cell.visit_prefixed("lstm_bwd", f);
        self.proj.visit_prefixed("proj", f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        f("embedding", slice_of_mut(&mut self.embedding));
        self.forward_cell.visit_prefixed_mut("lstm_fwd", f);
        self.backward_cell.visit_prefixed_mut("lstm_bwd", f);
        self.proj.visit_prefixed_mut("proj", f);
    }
}

/// Checks that the encoder was built for this vocabulary.
pub fn check_vocab(encoder: &Encoder, vocab: &Vocabulary) -> Result<()> {
    if encoder.vocab_size() != vocab.len() {
        return Err(Error::VocabMismatch(format!(
            "encoder has {} embeddings, vocabulary has {} entries",
            encoder.vocab_size(),
            vocab.len()
        )));
    }
    Ok(())
}
