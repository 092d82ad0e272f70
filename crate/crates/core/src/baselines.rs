//! No-adaptation and gradient-reversal (DANN) baselines. Both run through
//! the same loop, data preparation and evaluation as URAM.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::corpus::{LabeledDataset, TokenBatch};
use crate::error::{Error, Result};
use crate::models::FeatureBatch;
use crate::training::{discriminator_objective, run_method, Method, RunOutput, TrainConfig, Trainer};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrlConfig {
    pub reversal_strength: f64,
}

impl Default for GrlConfig {
    fn default() -> Self {
        Self { reversal_strength: 1.0 }
    }
}

/// Identity on the forward pass.
pub fn grl_apply(features: &FeatureBatch) -> FeatureBatch {
    features.clone()
}

/// Gradient passed upstream of the reversal layer.
pub fn grl_backward(grad: &Array2<f64>, strength: f64) -> Array2<f64> {
    grad.mapv(|g| -strength * g)
}

/// Source supervision only; the target set is read for the shared
/// vocabulary and for scoring, never for updates.
pub fn no_adapt_train(
    config: &TrainConfig,
    source: &LabeledDataset,
    target: &LabeledDataset,
    dataset_id: &str,
) -> Result<RunOutput> {
    run_method(Method::NoAdapt, config, source, target, dataset_id)
}

pub fn dann_train(
    config: &TrainConfig,
    source: &LabeledDataset,
    target: &LabeledDataset,
    dataset_id: &str,
) -> Result<RunOutput> {
    run_method(Method::Dann, config, source, target, dataset_id)
}

/// One joint update: source cross-entropy plus the domain loss seen
/// through the reversal layer, moving the encoder, classifier and
/// discriminator together. Returns (classification loss, domain loss).
pub(crate) fn dann_step(
    trainer: &mut Trainer,
    source: &TokenBatch,
    labels: &[usize],
    target: &TokenBatch,
) -> Result<(f64, f64)> {
    let params = &trainer.params;
    if labels.len() != source.len() {
        return Err(Error::Schema("source batch labels missing".into()));
    }
    let (fs, cache_s) = params.encoder.forward(source)?;
    let (ft, cache_t) = params.encoder.forward(target)?;
    let logits = params.classifier.logits(&fs)?;
    let (cls_loss, d_logits) = params.classifier.loss_and_grad(&logits, labels);
    let mut g_cla = params.classifier.zeros_like();
    let d_fs_cls = params.classifier.backward(&fs, &d_logits, &mut g_cla);

    let (dom_loss, g_disc, dxs, dxt) = discriminator_objective(&params.discriminator, &grl_apply(&fs), &grl_apply(&ft))?;
    trainer.check_finite("dann_class", cls_loss, None)?;
    trainer.check_finite("dann_domain", dom_loss, None)?;

    let strength = trainer.config.grl.reversal_strength;
    let d_fs = d_fs_cls + grl_backward(&dxs, strength);
    let d_ft = grl_backward(&dxt, strength);
    let mut g_enc = params.encoder.zeros_like();
    params.encoder.backward(source, &cache_s, &d_fs, &mut g_enc)?;
    params.encoder.backward(target, &cache_t, &d_ft, &mut g_enc)?;

    trainer.apply_encoder_classifier(g_enc, g_cla);
    trainer.apply_discriminator(g_disc);
    Ok((cls_loss, dom_loss))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn forward_is_bitwise_identity() {
        let f = FeatureBatch::new(array![[1.5, -2.0]]).unwrap();
        let out = grl_apply(&f);
        assert_eq!(out, f);
        for (a, b) in out.values().iter().zip(f.values()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn backward_negates_and_scales() {
        let g = array![[0.5, -1.0]];
        assert_eq!(grl_backward(&g, 2.0), array![[-1.0, 2.0]]);
        assert!(grl_backward(&g, 0.0).iter().all(|&x| x == 0.0));
    }
}
