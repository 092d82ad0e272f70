use std::path::PathBuf;

use ndarray::{Array1, Array2};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::TrainConfig;
use crate::corpus::TokenBatch;
use crate::error::{shape_err, Error, Result};
use crate::models::{
    apply_mask, sample_mask, softplus, Classifier, Critic, Discriminator, Encoder, FeatureBatch, MaskActor,
    MaskMatrix, MaskProbs, ParameterSet, Parameterized,
};
use crate::optim::{clip_global_norm, Adam};
use crate::rewards::{bundle, consistency_reward, regularization_reward, RewardBundle};

/// State, action and next state of the one-step masking episode.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeState {
    pub features: FeatureBatch,
    pub action: MaskMatrix,
    pub masked: FeatureBatch,
}

impl EpisodeState {
    pub fn new(features: FeatureBatch, action: MaskMatrix) -> Result<Self> {
        let masked = apply_mask(&action, &features)?;
        Ok(Self {
            features,
            action,
            masked,
        })
    }
}

/// Mean cross-entropy of C(E(x)) and gradients for the encoder and classifier.
pub fn supervised_objective(
    encoder: &Encoder,
    classifier: &Classifier,
    batch: &TokenBatch,
    labels: &[usize],
) -> Result<(f64, Encoder, Classifier)> {
    if labels.len() != batch.len() {
        return Err(shape_err(format!("{} labels", batch.len()), labels.len()));
    }
    let (feats, cache) = encoder.forward(batch)?;
    let logits = classifier.logits(&feats)?;
    let (loss, d_logits) = classifier.loss_and_grad(&logits, labels);
    let mut g_cla = classifier.zeros_like();
    let d_feats = classifier.backward(&feats, &d_logits, &mut g_cla);
    let mut g_enc = encoder.zeros_like();
    encoder.backward(batch, &cache, &d_feats, &mut g_enc)?;
    Ok((loss, g_enc, g_cla))
}

/// Cross-entropy of C(M_a * E(x)) for a fixed mask, with encoder and
/// classifier gradients; dropped features pass no gradient to the encoder.
pub fn masked_supervised_objective(
    encoder: &Encoder,
    classifier: &Classifier,
    batch: &TokenBatch,
    labels: &[usize],
    mask: &MaskMatrix,
) -> Result<(f64, Encoder, Classifier)> {
    if labels.len() != batch.len() {
        return Err(shape_err(format!("{} labels", batch.len()), labels.len()));
    }
    let (feats, cache) = encoder.forward(batch)?;
    let masked = apply_mask(mask, &feats)?;
    let logits = classifier.logits(&masked)?;
    let (loss, d_logits) = classifier.loss_and_grad(&logits, labels);
    let mut g_cla = classifier.zeros_like();
    let d_masked = classifier.backward(&masked, &d_logits, &mut g_cla);
    let d_feats = d_masked * mask.values();
    let mut g_enc = encoder.zeros_like();
    encoder.backward(batch, &cache, &d_feats, &mut g_enc)?;
    Ok((loss, g_enc, g_cla))
}

/// `mean_s softplus(-z) + mean_t softplus(z)`: binary cross-entropy with
/// source labeled 1 and target 0, summed over the two domains. Also
/// returns the gradients with respect to the discriminator and to each
/// feature batch.
pub fn discriminator_objective(
    disc: &Discriminator,
    src: &FeatureBatch,
    tgt: &FeatureBatch,
) -> Result<(f64, Discriminator, Array2<f64>, Array2<f64>)> {
    if src.is_empty() || tgt.is_empty() {
        return Err(Error::Empty("discriminator needs both domains".into()));
    }
    let (zs, cs) = disc.logits(src)?;
    let (zt, ct) = disc.logits(tgt)?;
    let (ns, nt) = (zs.len() as f64, zt.len() as f64);
    let loss = zs.mapv(|z| softplus(-z)).sum() / ns + zt.mapv(softplus).sum() / nt;
    // d softplus(-z)/dz = sigmoid(z) - 1, d softplus(z)/dz = sigmoid(z)
    let dzs = zs.mapv(|z| (crate::models::sigmoid(z) - 1.0) / ns);
    let dzt = zt.mapv(|z| crate::models::sigmoid(z) / nt);
    let mut grad = disc.zeros_like();
    let dxs = disc.backward(src, &cs, &dzs, &mut grad);
    let dxt = disc.backward(tgt, &ct, &dzt, &mut grad);
    Ok((loss, grad, dxs, dxt))
}

/// Mean squared error between the critic's prediction on `masked` and
/// `targets`, with the critic gradient.
pub fn critic_objective(critic: &Critic, masked: &FeatureBatch, targets: &Array1<f64>) -> Result<(f64, Critic)> {
    let (pred, cache) = critic.forward(masked)?;
    if pred.len() != targets.len() {
        return Err(shape_err(format!("{} targets", pred.len()), targets.len()));
    }
    let n = pred.len() as f64;
    let diff = &pred - targets;
    let loss = diff.dot(&diff) / n;
    let d_pred = diff.mapv(|d| 2.0 * d / n);
    let mut grad = critic.zeros_like();
    critic.backward(masked, &cache, &d_pred, &mut grad);
    Ok((loss, grad))
}

/// Policy-gradient surrogate with entropy regularization:
/// `mean_i [ -log pi(a_i | p_i) * adv_i + beta * sum_j (p ln p + (1-p) ln(1-p)) ]`,
/// where `adv` is treated as a constant. Returns the value and the actor gradient.
pub fn actor_objective(
    actor: &MaskActor,
    features: &FeatureBatch,
    action: &MaskMatrix,
    advantage: &Array1<f64>,
    beta: f64,
) -> Result<(f64, MaskActor)> {
    let probs = actor.mask_probs(features)?;
    if advantage.len() != features.len() {
        return Err(shape_err(format!("{} advantages", features.len()), advantage.len()));
    }
    let n = features.len() as f64;
    let log_pi = probs.log_prob(action)?;
    let neg_ent = probs.neg_entropy();
    let loss = (-(&log_pi * advantage) + beta * &neg_ent).sum() / n;
    let d_probs = actor_prob_gradient(&probs, action, advantage, beta, n);
    let mut grad = actor.zeros_like();
    actor.backward_from_probs(features, &probs, &d_probs, &mut grad);
    Ok((loss, grad))
}

fn actor_prob_gradient(probs: &MaskProbs, action: &MaskMatrix, advantage: &Array1<f64>, beta: f64, n: f64) -> Array2<f64> {
    let mut d = Array2::zeros(probs.values().dim());
    for ((i, j), out) in d.indexed_iter_mut() {
        let p = probs.values()[[i, j]];
        let m = action.values()[[i, j]];
        let score = m / p - (1.0 - m) / (1.0 - p);
        *out = (-advantage[i] * score + beta * (p / (1.0 - p)).ln()) / n;
    }
    d
}

/// Rewards and advantages for an episode whose first `n_source` rows are
/// source documents. Disabled terms contribute zeros.
pub fn episode_rewards(
    params: &ParameterSet,
    episode: &EpisodeState,
    n_source: usize,
    config: &TrainConfig,
) -> Result<RewardBundle> {
    let n = episode.features.len();
    if n_source > n {
        return Err(shape_err(format!("at most {n} source rows"), n_source));
    }
    let r_d = if config.disable_r_d {
        Array1::zeros(n)
    } else {
        let (z, _) = params.discriminator.logits(&episode.masked)?;
        Array1::from_iter(
            z.iter()
                .enumerate()
                .map(|(i, &z)| if i < n_source { softplus(-z) } else { softplus(z) }),
        )
    };
    let r_c = if config.disable_r_c {
        Array1::zeros(n)
    } else {
        let full = params.classifier.classify(&episode.features)?;
        let masked = params.classifier.classify(&episode.masked)?;
        consistency_reward(&full, &masked)?
    };
    let r_reg = regularization_reward(&episode.action);
    let r_p = params.critic.value(&episode.masked)?;
    bundle(r_d, r_c, r_reg, r_p, &config.rewards)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepCStats {
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub mean_r_d: f64,
    pub mean_r_c: f64,
    pub mask_density: f64,
}

#[derive(Clone, Debug, Serialize)]
struct AbortSnapshot<'a> {
    step: &'a str,
    message: &'a str,
    source_batch_ids: &'a [usize],
    target_batch_ids: &'a [usize],
    parameter_hashes: Vec<(&'static str, String)>,
    reward_stats: Option<RewardStats>,
}

#[derive(Clone, Debug, Serialize)]
struct RewardStats {
    mean_r_d: f64,
    mean_r_c: f64,
    mean_r_reg: f64,
    mean_r_p: f64,
    mean_advantage: f64,
}

impl RewardStats {
    fn of(b: &RewardBundle) -> Self {
        let m = |a: &Array1<f64>| a.mean().unwrap_or(f64::NAN);
        Self {
            mean_r_d: m(&b.r_d),
            mean_r_c: m(&b.r_c),
            mean_r_reg: m(&b.r_reg),
            mean_r_p: m(&b.r_p),
            mean_advantage: m(&b.advantage),
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Optimizers {
    encoder: Adam,
    classifier: Adam,
    discriminator: Adam,
    mask_actor: Adam,
    critic: Adam,
}

impl Optimizers {
    fn new(lr: f64) -> Self {
        Self {
            encoder: Adam::new(lr),
            classifier: Adam::new(lr),
            discriminator: Adam::new(lr),
            mask_actor: Adam::new(lr),
            critic: Adam::new(lr),
        }
    }
}

/// Parameters, optimizer state and the mask-sampling stream for one run.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub config: TrainConfig,
    pub params: ParameterSet,
    pub(crate) opt: Optimizers,
    pub(crate) mask_rng: ChaCha8Rng,
    pub(crate) aux_rng: ChaCha8Rng,
    pub(crate) batch_ids: (Vec<usize>, Vec<usize>),
}

impl Trainer {
    /// `mask_rng` drives step C's sampling; `aux_rng` drives masks drawn
    /// in steps A and B when those read masked features.
    pub fn new(config: TrainConfig, params: ParameterSet, mask_rng: ChaCha8Rng, aux_rng: ChaCha8Rng) -> Self {
        Self {
            aux_rng,
            opt: Optimizers::new(config.learning_rate),
            config,
            params,
            mask_rng,
            batch_ids: (Vec::new(), Vec::new()),
        }
    }

    pub fn mask_rng(&self) -> &ChaCha8Rng {
        &self.mask_rng
    }

    /// Records which documents the current batches hold, for abort snapshots.
    pub fn set_batch_ids(&mut self, source: &[usize], target: &[usize]) {
        self.batch_ids = (source.to_vec(), target.to_vec());
    }

    pub(crate) fn check_finite(&self, step: &str, value: f64, rewards: Option<&RewardBundle>) -> Result<()> {
        if value.is_finite() {
            return Ok(());
        }
        let message = format!("non-finite {step} loss");
        let snapshot = self.write_snapshot(step, &message, rewards);
        Err(Error::NonFinite { message, snapshot })
    }

    fn write_snapshot(&self, step: &str, message: &str, rewards: Option<&RewardBundle>) -> Option<PathBuf> {
        let dir = self.config.snapshot_dir.as_ref()?;
        let snap = AbortSnapshot {
            step,
            message,
            source_batch_ids: &self.batch_ids.0,
            target_batch_ids: &self.batch_ids.1,
            parameter_hashes: self.params.fingerprints(),
            reward_stats: rewards.map(RewardStats::of),
        };
        std::fs::create_dir_all(dir).ok()?;
        let path = dir.join("abort.json");
        let text = serde_json::to_string_pretty(&snap).ok()?;
        std::fs::write(&path, text).ok()?;
        Some(dir.clone())
    }

    /// Supervised step on a labeled source batch; touches the encoder and
    /// classifier only.
    pub fn step_a(&mut self, batch: &TokenBatch, labels: &[usize]) -> Result<f64> {
        let (loss, g_enc, g_cla) = if self.config.masked_supervision {
            let feats = self.params.encoder.encode(batch)?;
            let mask = sample_mask(&self.params.mask_actor.mask_probs(&feats)?, &mut self.aux_rng);
            masked_supervised_objective(&self.params.encoder, &self.params.classifier, batch, labels, &mask)?
        } else {
            supervised_objective(&self.params.encoder, &self.params.classifier, batch, labels)?
        };
        self.check_finite("step_a", loss, None)?;
        self.apply_encoder_classifier(g_enc, g_cla);
        Ok(loss)
    }

    pub(crate) fn apply_encoder_classifier(&mut self, g_enc: Encoder, g_cla: Classifier) {
        let mut fe = g_enc.to_flat();
        let mut fc = g_cla.to_flat();
        clip_global_norm(&mut [&mut fe, &mut fc], self.config.grad_clip);
        self.opt.encoder.step(&mut self.params.encoder, &fe);
        self.opt.classifier.step(&mut self.params.classifier, &fc);
    }

    pub(crate) fn apply_discriminator(&mut self, g: Discriminator) {
        let mut f = g.to_flat();
        clip_global_norm(&mut [&mut f], self.config.grad_clip);
        self.opt.discriminator.step(&mut self.params.discriminator, &f);
    }

    /// Discriminator step on E(x) of both domains; only the discriminator moves.
    pub fn step_b(&mut self, source: &TokenBatch, target: &TokenBatch) -> Result<f64> {
        let mut fs = self.params.encoder.encode(source)?;
        let mut ft = self.params.encoder.encode(target)?;
        if self.config.masked_discriminator {
            for f in [&mut fs, &mut ft] {
                let mask = sample_mask(&self.params.mask_actor.mask_probs(f)?, &mut self.aux_rng);
                *f = apply_mask(&mask, f)?;
            }
        }
        let (loss, grad, _, _) = discriminator_objective(&self.params.discriminator, &fs, &ft)?;
        self.check_finite("step_b", loss, None)?;
        self.apply_discriminator(grad);
        Ok(loss)
    }

    /// Critic regression and policy-gradient actor update on one episode
    /// built from both batches. The discriminator, classifier and encoder
    /// are read but not changed.
    pub fn step_c(&mut self, source: &TokenBatch, target: &TokenBatch) -> Result<StepCStats> {
        let fs = self.params.encoder.encode(source)?;
        let ft = self.params.encoder.encode(target)?;
        let features = fs.concat(&ft)?;
        let probs = self.params.mask_actor.mask_probs(&features)?;
        let action = sample_mask(&probs, &mut self.mask_rng);
        let episode = EpisodeState::new(features, action)?;
        let rewards = episode_rewards(&self.params, &episode, fs.len(), &self.config)?;

        let (critic_loss, g_critic) = critic_objective(&self.params.critic, &episode.masked, &rewards.r_total)?;
        self.check_finite("critic", critic_loss, Some(&rewards))?;
        let (actor_loss, g_actor) = actor_objective(
            &self.params.mask_actor,
            &episode.features,
            &episode.action,
            &rewards.advantage,
            self.config.entropy_weight,
        )?;
        self.check_finite("actor", actor_loss, Some(&rewards))?;

        let mut fc = g_critic.to_flat();
        clip_global_norm(&mut [&mut fc], self.config.grad_clip);
        self.opt.critic.step(&mut self.params.critic, &fc);
        let mut fa = g_actor.to_flat();
        clip_global_norm(&mut [&mut fa], self.config.grad_clip);
        self.opt.mask_actor.step(&mut self.params.mask_actor, &fa);

        Ok(StepCStats {
            critic_loss,
            actor_loss,
            mean_r_d: rewards.r_d.mean().unwrap_or(0.0),
            mean_r_c: rewards.r_c.mean().unwrap_or(0.0),
            mask_density: episode.action.density(),
        })
    }

    /// Direct critic update toward fixed targets on given inputs.
    pub fn critic_step(&mut self, masked: &FeatureBatch, targets: &Array1<f64>) -> Result<f64> {
        let (loss, g) = critic_objective(&self.params.critic, masked, targets)?;
        self.check_finite("critic", loss, None)?;
        let mut f = g.to_flat();
        clip_global_norm(&mut [&mut f], self.config.grad_clip);
        self.opt.critic.step(&mut self.params.critic, &f);
        Ok(loss)
    }

    /// Actor update on `features` with an arbitrary per-sample reward
    /// function of the sampled mask, using the critic as baseline.
    /// Returns the mean reward.
    pub fn actor_step_with<F>(&mut self, features: &FeatureBatch, reward: F) -> Result<f64>
    where
        F: Fn(&MaskMatrix) -> Array1<f64>,
    {
        let probs = self.params.mask_actor.mask_probs(features)?;
        let action = sample_mask(&probs, &mut self.mask_rng);
        let episode = EpisodeState::new(features.clone(), action)?;
        let r = reward(&episode.action);
        let r_p = self.params.critic.value(&episode.masked)?;
        let advantage = &r - &r_p;
        self.critic_step(&episode.masked, &r)?;
        let (loss, g) = actor_objective(
            &self.params.mask_actor,
            features,
            &episode.action,
            &advantage,
            self.config.entropy_weight,
        )?;
        self.check_finite("actor", loss, None)?;
        let mut f = g.to_flat();
        clip_global_norm(&mut [&mut f], self.config.grad_clip);
        self.opt.mask_actor.step(&mut self.params.mask_actor, &f);
        Ok(r.mean().unwrap_or(0.0))
    }
}
