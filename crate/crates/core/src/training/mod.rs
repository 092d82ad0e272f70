//! The three-step training loop, per-epoch evaluation and prediction.

mod data;
mod steps;

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::{f1_score, F1Mode, Representation, RunResult};
use crate::baselines::{dann_step, GrlConfig};
use crate::corpus::{LabeledDataset, TokenBatch, DEFAULT_MAX_LEN};
use crate::error::{Error, Result};
use crate::models::{
    apply_mask, check_vocab, Checkpoint, ClassMode, ClassProbs, EncoderConfig, EncoderKind, FeatureBatch, ModelConfig,
    ParameterSet,
};
use crate::rewards::RewardWeights;

pub(crate) use data::BatchStream;
pub use data::{EncodedSplit, PreparedData};
pub use steps::{
    actor_objective, critic_objective, discriminator_objective, episode_rewards, masked_supervised_objective, supervised_objective, EpisodeState,
    StepCStats, Trainer,
};

/// Order of the three steps within an epoch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepOrder {
    /// A, B, C on each batch pair in turn.
    #[default]
    Interleaved,
    /// A over every batch of the epoch, then B over all, then C over all.
    Phased,
}

impl std::str::FromStr for StepOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "interleaved" => Ok(Self::Interleaved),
            "phased" => Ok(Self::Phased),
            other => Err(Error::Config(format!("unknown step order `{other}`"))),
        }
    }
}

/// Encoder and head sizes; the vocabulary size and class count come from data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub encoder: EncoderKind,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub feature_dim: usize,
    pub class_mode: ClassMode,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            encoder: EncoderKind::BiLstm,
            embed_dim: 100,
            hidden_dim: 256,
            feature_dim: 256,
            class_mode: ClassMode::Softmax,
        }
    }
}

impl ModelSpec {
    pub fn model_config(&self, vocab_size: usize, num_classes: usize) -> ModelConfig {
        let mut cfg = ModelConfig::new(
            EncoderConfig {
                kind: self.encoder,
                vocab_size,
                embed_dim: self.embed_dim,
                hidden_dim: self.hidden_dim,
                feature_dim: self.feature_dim,
            },
            num_classes,
        );
        cfg.class_mode = self.class_mode;
        cfg
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Number of epochs.
    pub max_iterations: usize,
    pub rewards: RewardWeights,
    pub entropy_weight: f64,
    pub seed: u64,
    pub disable_r_d: bool,
    pub disable_r_c: bool,
    pub grad_clip: f64,
    pub step_order: StepOrder,
    /// Features the classifier reads at evaluation time for URAM runs.
    pub eval_path: Representation,
    pub f1_mode: F1Mode,
    /// Step A fits the classifier on sampled-mask features M_a * E(x).
    pub masked_supervision: bool,
    /// Step B trains the discriminator on sampled-mask features.
    pub masked_discriminator: bool,
    pub holdout_fraction: f64,
    pub model: ModelSpec,
    pub grl: GrlConfig,
    pub pretrained: Option<PathBuf>,
    /// Where a numerical abort writes its diagnostics.
    pub snapshot_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 64,
            max_iterations: 50,
            rewards: RewardWeights::default(),
            entropy_weight: 0.01,
            seed: 0,
            disable_r_d: false,
            disable_r_c: false,
            grad_clip: 5.0,
            step_order: StepOrder::Interleaved,
            eval_path: Representation::Encoder,
            f1_mode: F1Mode::Macro,
            masked_supervision: false,
            masked_discriminator: false,
            holdout_fraction: 0.1,
            model: ModelSpec::default(),
            grl: GrlConfig::default(),
            pretrained: None,
            snapshot_dir: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be at least 1");
        }
        if !(self.grad_clip > 0.0) {
            return bad("grad_clip must be positive");
        }
        if !self.entropy_weight.is_finite() || self.entropy_weight < 0.0 {
            return bad("entropy_weight must be finite and non-negative");
        }
        if !self.rewards.lambda_c.is_finite() || !self.rewards.lambda_reg.is_finite() {
            return bad("reward weights must be finite");
        }
        if !self.grl.reversal_strength.is_finite() || self.grl.reversal_strength < 0.0 {
            return bad("grl strength must be finite and non-negative");
        }
        Ok(())
    }

    pub fn corpus_seed(&self) -> u64 {
        self.seed
    }

    pub fn init_seed(&self) -> u64 {
        self.seed.wrapping_add(1)
    }

    pub fn sampling_seed(&self) -> u64 {
        self.seed.wrapping_add(2)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "uram")]
    Uram,
    #[serde(rename = "no-adapt")]
    NoAdapt,
    #[serde(rename = "dann")]
    Dann,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Uram => "uram",
            Method::NoAdapt => "no-adapt",
            Method::Dann => "dann",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uram" => Ok(Self::Uram),
            "no-adapt" => Ok(Self::NoAdapt),
            "dann" => Ok(Self::Dann),
            other => Err(Error::Config(format!("unknown method `{other}`"))),
        }
    }
}

/// One row per completed epoch. Columns that a method does not produce
/// are left empty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub method: String,
    pub epoch: usize,
    pub step_a_loss: f64,
    pub disc_loss: Option<f64>,
    pub critic_loss: Option<f64>,
    pub actor_loss: Option<f64>,
    pub mean_r_d: Option<f64>,
    pub mean_r_c: Option<f64>,
    pub mean_mask_density: Option<f64>,
    pub source_f1: Option<f64>,
    pub target_f1: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsLog {
    pub method: String,
    pub seed: u64,
    pub dataset: String,
    pub records: Vec<EpochRecord>,
}

impl MetricsLog {
    pub fn new(method: impl Into<String>, seed: u64, dataset: impl Into<String>) -> Self {
        Self {
            method: method.into(),
            seed,
            dataset: dataset.into(),
            records: Vec::new(),
        }
    }

    /// Appends a record; epochs must be numbered 1, 2, ...
    pub fn push(&mut self, record: EpochRecord) -> Result<()> {
        if record.epoch != self.records.len() + 1 {
            return Err(Error::Config(format!(
                "epoch {} recorded after {} records",
                record.epoch,
                self.records.len()
            )));
        }
        self.records.push(record);
        Ok(())
    }

    pub fn final_target_f1(&self) -> Option<f64> {
        self.records.last().and_then(|r| r.target_f1)
    }

    pub fn target_f1_series(&self) -> Vec<f64> {
        self.records.iter().filter_map(|r| r.target_f1).collect()
    }

    /// Renames the method tag on the log and every record.
    pub fn relabel(&mut self, method: &str) {
        self.method = method.to_string();
        for r in &mut self.records {
            r.method = method.to_string();
        }
    }

    pub fn run_result(&self) -> Result<RunResult> {
        Ok(RunResult {
            method: self.method.clone(),
            seed: self.seed,
            dataset: self.dataset.clone(),
            target_f1: self
                .final_target_f1()
                .ok_or_else(|| Error::Empty("run has no target F1".into()))?,
        })
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        if self.records.is_empty() {
            w.write_record(CSV_COLUMNS)?;
        }
        for r in &self.records {
            w.serialize(r)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string()?)?;
        Ok(())
    }

    pub fn read_csv(path: &Path, seed: u64, dataset: &str) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)?;
        let records: Vec<EpochRecord> = reader.deserialize().collect::<std::result::Result<_, _>>()?;
        let method = records.first().map(|r| r.method.clone()).unwrap_or_default();
        let mut log = Self::new(method, seed, dataset);
        for r in records {
            log.push(r)?;
        }
        Ok(log)
    }
}

pub const CSV_COLUMNS: [&str; 11] = [
    "method",
    "epoch",
    "step_a_loss",
    "disc_loss",
    "critic_loss",
    "actor_loss",
    "mean_r_d",
    "mean_r_c",
    "mean_mask_density",
    "source_f1",
    "target_f1",
];

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub checkpoint: Checkpoint,
    pub log: MetricsLog,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

#[derive(Default)]
struct EpochSums {
    batches: usize,
    step_a: f64,
    disc: f64,
    critic: f64,
    actor: f64,
    r_d: f64,
    r_c: f64,
    density: f64,
}

/// Trains URAM on labeled `source` and `target`, whose labels are used
/// only for per-epoch scoring.
pub fn run(config: &TrainConfig, source: &LabeledDataset, target: &LabeledDataset) -> Result<RunOutput> {
    run_method(Method::Uram, config, source, target, "dataset")
}

/// Shared loop for URAM and both baselines.
pub fn run_method(
    method: Method,
    config: &TrainConfig,
    source: &LabeledDataset,
    target: &LabeledDataset,
    dataset_id: &str,
) -> Result<RunOutput> {
    config.validate()?;
    let data = PreparedData::new(source, target, config.holdout_fraction, DEFAULT_MAX_LEN, config.corpus_seed())?;
    let model_cfg = config.model.model_config(data.vocab.len(), data.num_classes);
    let mut params = ParameterSet::new(&model_cfg, &mut ChaCha8Rng::seed_from_u64(config.init_seed()))?;
    if let Some(path) = &config.pretrained {
        params.encoder.load_pretrained(&data.vocab, path)?;
    }
    let sampling = config.sampling_seed();
    let mut run_config = config.clone();
    if method != Method::Uram {
        run_config.masked_supervision = false;
        run_config.masked_discriminator = false;
    }
    let mut trainer = Trainer::new(run_config, params, stream(sampling, 2), stream(sampling, 3));
    let mut src_stream = BatchStream::new(data.source_train.len(), stream(sampling, 0));
    let mut tgt_stream = BatchStream::new(data.target.len(), stream(sampling, 1));
    let uses_target = method != Method::NoAdapt;
    let eval_path = if method == Method::Uram {
        config.eval_path
    } else {
        Representation::Encoder
    };

    let mut log = MetricsLog::new(method.name(), config.seed, dataset_id);
    for epoch in 1..=config.max_iterations {
        let pairs = plan_epoch(&mut src_stream, &mut tgt_stream, uses_target, config.batch_size);
        let mut sums = EpochSums::default();
        let batches: Vec<_> = pairs
            .iter()
            .map(|(s, t)| {
                let labels: Vec<usize> = s
                    .iter()
                    .map(|&i| data.source_train.labels.as_ref().expect("source labeled")[i])
                    .collect();
                (
                    data.source_train.tokens.select(s),
                    labels,
                    data.target.tokens.select(t),
                )
            })
            .collect();
        match (method, config.step_order) {
            (Method::Uram, StepOrder::Phased) => {
                for (k, (sb, labels, _)) in batches.iter().enumerate() {
                    trainer.set_batch_ids(&pairs[k].0, &pairs[k].1);
                    sums.step_a += trainer.step_a(sb, labels)?;
                }
                for (k, (sb, _, tb)) in batches.iter().enumerate() {
                    trainer.set_batch_ids(&pairs[k].0, &pairs[k].1);
                    sums.disc += trainer.step_b(sb, tb)?;
                }
                for (k, (sb, _, tb)) in batches.iter().enumerate() {
                    trainer.set_batch_ids(&pairs[k].0, &pairs[k].1);
                    add_c(&mut sums, trainer.step_c(sb, tb)?);
                }
            }
            _ => {
                for (k, (sb, labels, tb)) in batches.iter().enumerate() {
                    trainer.set_batch_ids(&pairs[k].0, &pairs[k].1);
                    match method {
                        Method::NoAdapt => sums.step_a += trainer.step_a(sb, labels)?,
                        Method::Uram => {
                            sums.step_a += trainer.step_a(sb, labels)?;
                            sums.disc += trainer.step_b(sb, tb)?;
                            add_c(&mut sums, trainer.step_c(sb, tb)?);
                        }
                        Method::Dann => {
                            let (a, d) = dann_step(&mut trainer, sb, labels, tb)?;
                            sums.step_a += a;
                            sums.disc += d;
                        }
                    }
                }
            }
        }
        sums.batches = batches.len();
        let record = epoch_record(method, epoch, &sums, &trainer.params, &data, eval_path, config.f1_mode)?;
        log.push(record)?;
    }

    let checkpoint = Checkpoint::new(
        method.name(),
        model_cfg,
        data.vocab.clone(),
        trainer.params,
        trainer.mask_rng,
    );
    Ok(RunOutput { checkpoint, log })
}

fn add_c(sums: &mut EpochSums, c: StepCStats) {
    sums.critic += c.critic_loss;
    sums.actor += c.actor_loss;
    sums.r_d += c.mean_r_d;
    sums.r_c += c.mean_r_c;
    sums.density += c.mask_density;
}

/// Batch index pairs for one epoch: one pass over the smaller domain,
/// drawing equally many documents from the other domain's running stream.
fn plan_epoch(
    src: &mut BatchStream,
    tgt: &mut BatchStream,
    uses_target: bool,
    batch_size: usize,
) -> Vec<(Vec<usize>, Vec<usize>)> {
    let mut out = Vec::new();
    if !uses_target {
        src.reshuffle();
        while !src.exhausted() {
            out.push((src.next_within_pass(batch_size), Vec::new()));
        }
    } else if src.len() <= tgt.len() {
        src.reshuffle();
        while !src.exhausted() {
            let s = src.next_within_pass(batch_size);
            let t = tgt.next_filled(s.len());
            out.push((s, t));
        }
    } else {
        tgt.reshuffle();
        while !tgt.exhausted() {
            let t = tgt.next_within_pass(batch_size);
            let s = src.next_filled(t.len());
            out.push((s, t));
        }
    }
    out
}

fn epoch_record(
    method: Method,
    epoch: usize,
    sums: &EpochSums,
    params: &ParameterSet,
    data: &PreparedData,
    eval_path: Representation,
    f1_mode: F1Mode,
) -> Result<EpochRecord> {
    let n = sums.batches.max(1) as f64;
    let adv = |v: f64, on: bool| on.then_some(v / n);
    let is_uram = method == Method::Uram;
    let has_disc = method != Method::NoAdapt;
    let source_f1 = match &data.source_holdout.labels {
        Some(labels) if !labels.is_empty() => Some(score(
            params,
            &data.source_holdout.tokens,
            labels,
            eval_path,
            f1_mode,
            data.num_classes,
        )?),
        _ => None,
    };
    let target_f1 = match data.target_eval_labels() {
        Some(labels) => Some(score(params, &data.target.tokens, labels, eval_path, f1_mode, data.num_classes)?),
        None => None,
    };
    Ok(EpochRecord {
        method: method.name().to_string(),
        epoch,
        step_a_loss: sums.step_a / n,
        disc_loss: adv(sums.disc, has_disc),
        critic_loss: adv(sums.critic, is_uram),
        actor_loss: adv(sums.actor, is_uram),
        mean_r_d: adv(sums.r_d, is_uram),
        mean_r_c: adv(sums.r_c, is_uram),
        mean_mask_density: adv(sums.density, is_uram),
        source_f1,
        target_f1,
    })
}

const EVAL_CHUNK: usize = 256;

/// Class probabilities for every row of `tokens`, reading unmasked or
/// threshold-masked features.
pub fn class_probs(params: &ParameterSet, tokens: &TokenBatch, path: Representation) -> Result<ClassProbs> {
    let n = tokens.len();
    let k = params.classifier.num_classes();
    let mut values = ndarray::Array2::zeros((n, k));
    let mut mode = params.classifier.mode;
    let rows: Vec<usize> = (0..n).collect();
    for chunk in rows.chunks(EVAL_CHUNK) {
        let batch = tokens.select(chunk);
        let feats = masked_features(params, &batch, path)?;
        let probs = params.classifier.classify(&feats)?;
        mode = probs.mode;
        values
            .slice_mut(ndarray::s![chunk[0]..chunk[0] + chunk.len(), ..])
            .assign(&probs.values);
    }
    Ok(ClassProbs { values, mode })
}

fn masked_features(params: &ParameterSet, batch: &TokenBatch, path: Representation) -> Result<FeatureBatch> {
    let feats = params.encoder.encode(batch)?;
    match path {
        Representation::Encoder => Ok(feats),
        Representation::Masked => {
            let mask = params.mask_actor.mask_probs(&feats)?.threshold();
            apply_mask(&mask, &feats)
        }
    }
}

fn score(
    params: &ParameterSet,
    tokens: &TokenBatch,
    gold: &[usize],
    path: Representation,
    mode: F1Mode,
    num_classes: usize,
) -> Result<f64> {
    let preds = class_probs(params, tokens, path)?.hard_labels();
    f1_score(mode, &preds, gold, num_classes)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub probs: ClassProbs,
    pub labels: Vec<usize>,
}

/// Class probabilities and hard labels for each document, in input order.
pub fn predict(ck: &Checkpoint, dataset: &LabeledDataset, path: Representation) -> Result<Prediction> {
    check_vocab(&ck.params.encoder, &ck.vocab)?;
    if dataset.num_classes() != ck.config.num_classes {
        return Err(Error::Schema(format!(
            "dataset has {} classes, checkpoint {}",
            dataset.num_classes(),
            ck.config.num_classes
        )));
    }
    let docs: Vec<_> = dataset.documents().iter().collect();
    let tokens = TokenBatch::encode(&ck.vocab, &docs, DEFAULT_MAX_LEN);
    let probs = class_probs(&ck.params, &tokens, path)?;
    let labels = probs.hard_labels();
    Ok(Prediction { probs, labels })
}
