use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::{Linear, Parameterized};
use super::{ClassMode, ClassProbs, DomainProbs, FeatureBatch, MaskProbs, MASK_EPS};
use crate::error::Result;

/// Linear layer to class logits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Classifier {
    pub linear: Linear,
    pub mode: ClassMode,
}

impl Classifier {
    pub fn new<R: Rng>(rng: &mut R, feature_dim: usize, num_classes: usize, mode: ClassMode) -> Self {
        Self {
            linear: Linear::new(rng, feature_dim, num_classes),
            mode,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.linear.output_dim()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            linear: self.linear.zeros_like(),
            mode: self.mode,
        }
    }

    pub fn logits(&self, features: &FeatureBatch) -> Result<Array2<f64>> {
        features.check_dim(self.linear.input_dim())?;
        Ok(self.linear.forward(features.values()))
    }

    pub fn classify(&self, features: &FeatureBatch) -> Result<ClassProbs> {
        Ok(ClassProbs::from_logits(&self.logits(features)?, self.mode))
    }

    /// Backward from logit gradients; returns the feature gradient.
    pub fn backward(&self, features: &FeatureBatch, d_logits: &Array2<f64>, grad: &mut Classifier) -> Array2<f64> {
        self.linear.backward(features.values(), d_logits, &mut grad.linear)
    }

    /// Mean supervised loss and its logit gradient. Softmax mode uses
    /// categorical cross-entropy; multilabel mode uses per-class binary
    /// cross-entropy against the one-hot target.
    pub fn loss_and_grad(&self, logits: &Array2<f64>, labels: &[usize]) -> (f64, Array2<f64>) {
        let n = labels.len() as f64;
        match self.mode {
            ClassMode::Softmax => {
                let probs = super::softmax_rows(logits);
                let mut loss = 0.0;
                let mut d = probs.clone();
                for (i, &y) in labels.iter().enumerate() {
                    let row = logits.row(i);
                    let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
                    let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
                    loss += lse - row[y];
                    d[[i, y]] -= 1.0;
                }
                (loss / n, d / n)
            }
            ClassMode::MultilabelSigmoid => {
                let mut loss = 0.0;
                let mut d = Array2::zeros(logits.raw_dim());
                for (i, &y) in labels.iter().enumerate() {
                    for (k, &z) in logits.row(i).iter().enumerate() {
                        let t = if k == y { 1.0 } else { 0.0 };
                        loss += super::softplus(z) - t * z;
                        d[[i, k]] = super::sigmoid(z) - t;
                    }
                }
                (loss / n, d / n)
            }
        }
    }
}

impl Parameterized for Classifier {
    fn visit(&self, f: &mut dyn FnMut(&str, &[f64])) {
        self.linear.visit_prefixed("linear", f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        self.linear.visit_prefixed_mut("linear", f);
    }
}

/// `x -> tanh(x W1^T + b1) W2^T + b2`, one scalar per row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoLayer {
    pub hidden: Linear,
    pub output: Linear,
}

pub struct TwoLayerCache {
    hidden: Array2<f64>,
}

impl TwoLayer {
    pub fn new<R: Rng>(rng: &mut R, input: usize, hidden: usize) -> Self {
        Self {
            hidden: Linear::new(rng, input, hidden),
            output: Linear::new(rng, hidden, 1),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            hidden: self.hidden.zeros_like(),
            output: self.output.zeros_like(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.hidden.input_dim()
    }

    pub fn forward(&self, x: &FeatureBatch) -> Result<(Array1<f64>, TwoLayerCache)> {
        x.check_dim(self.input_dim())?;
        let hidden = self.hidden.forward(x.values()).mapv_into(f64::tanh);
        let out = self.output.forward(&hidden).remove_axis(Axis(1));
        Ok((out, TwoLayerCache { hidden }))
    }

    /// Returns the input gradient.
    pub fn backward(&self, x: &FeatureBatch, cache: &TwoLayerCache, d_out: &Array1<f64>, grad: &mut TwoLayer) -> Array2<f64> {
        let d_out = d_out.view().insert_axis(Axis(1)).to_owned();
        let d_hidden = self.output.backward(&cache.hidden, &d_out, &mut grad.output);
        let d_pre = d_hidden * &cache.hidden.mapv(|h| 1.0 - h * h);
        self.hidden.backward(x.values(), &d_pre, &mut grad.hidden)
    }

    fn visit_prefixed(&self, f: &mut dyn FnMut(&str, &[f64])) {
        self.hidden.visit_prefixed("hidden", f);
        self.output.visit_prefixed("output", f);
    }

    fn visit_prefixed_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        self.hidden.visit_prefixed_mut("hidden", f);
        self.output.visit_prefixed_mut("output", f);
    }
}

impl Parameterized for TwoLayer {
    fn visit(&self, f: &mut dyn FnMut(&str, &[f64])) {
        self.visit_prefixed(f)
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        self.visit_prefixed_mut(f)
    }
}

/// Predicts the probability that a feature row comes from the source domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Discriminator {
    pub net: TwoLayer,
}

impl Discriminator {
    pub fn new<R: Rng>(rng: &mut R, feature_dim: usize, hidden: usize) -> Self {
        Self {
            net: TwoLayer::new(rng, feature_dim, hidden),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            net: self.net.zeros_like(),
        }
    }

    pub fn logits(&self, features: &FeatureBatch) -> Result<(Array1<f64>, TwoLayerCache)> {
        self.net.forward(features)
    }

    pub fn discriminate(&self, features: &FeatureBatch) -> Result<DomainProbs> {
        Ok(DomainProbs::from_logits(&self.logits(features)?.0))
    }

    pub fn backward(&self, x: &FeatureBatch, cache: &TwoLayerCache, d_logits: &Array1<f64>, grad: &mut Discriminator) -> Array2<f64> {
        self.net.backward(x, cache, d_logits, &mut grad.net)
    }
}

impl Parameterized for Discriminator {
    fn visit(&self, f: &mut dyn FnMut(&str, &[f64])) {
        self.net.visit(f)
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        self.net.visit_mut(f)
    }
}

/// Predicts the total reward of a masked feature row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Critic {
    pub net: TwoLayer,
}

impl Critic {
    pub fn new<R: Rng>(rng: &mut R, feature_dim: usize, hidden: usize) -> Self {
        Self {
            net: TwoLayer::new(rng, feature_dim, hidden),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            net: self.net.zeros_like(),
        }
    }

    pub fn value(&self, masked: &FeatureBatch) -> Result<Array1<f64>> {
        Ok(self.net.forward(masked)?.0)
    }

    pub fn forward(&self, masked: &FeatureBatch) -> Result<(Array1<f64>, TwoLayerCache)> {
        self.net.forward(masked)
    }

    pub fn backward(&self, x: &FeatureBatch, cache: &TwoLayerCache, d_value: &Array1<f64>, grad: &mut Critic) -> Array2<f64> {
        self.net.backward(x, cache, d_value, &mut grad.net)
    }
}

impl Parameterized for Critic {
    fn visit(&self, f: &mut dyn FnMut(&str, &[f64])) {
        self.net.visit(f)
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        self.net.visit_mut(f)
    }
}

/// The policy: one fully connected layer and a sigmoid giving a keep
/// probability per feature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskActor {
    pub linear: Linear,
}

impl MaskActor {
    pub fn new<R: Rng>(rng: &mut R, feature_dim: usize) -> Self {
        Self {
            linear: Linear::new(rng, feature_dim, feature_dim),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            linear: self.linear.zeros_like(),
        }
    }

    pub fn logits(&self, features: &FeatureBatch) -> Result<Array2<f64>> {
        features.check_dim(self.linear.input_dim())?;
        Ok(self.linear.forward(features.values()))
    }

    pub fn mask_probs(&self, features: &FeatureBatch) -> Result<MaskProbs> {
        Ok(MaskProbs::from_logits(&self.logits(features)?))
    }

    /// Backward from gradients w.r.t. the clamped probabilities. Entries
    /// pinned by the clamp pass no gradient.
    pub fn backward_from_probs(&self, features: &FeatureBatch, probs: &MaskProbs, d_probs: &Array2<f64>, grad: &mut MaskActor) -> Array2<f64> {
        let mut d_logits = d_probs.clone();
        ndarray::Zip::from(&mut d_logits)
            .and(probs.values())
            .for_each(|d, &p| {
                if p <= MASK_EPS || p >= 1.0 - MASK_EPS {
                    *d = 0.0;
                } else {
                    *d *= p * (1.0 - p);
                }
            });
        self.linear.backward(features.values(), &d_logits, &mut grad.linear)
    }
}

impl Parameterized for MaskActor {
    fn visit(&self, f: &mut dyn FnMut(&str, &[f64])) {
        self.linear.visit_prefixed("linear", f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        self.linear.visit_prefixed_mut("linear", f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn feats(v: Array2<f64>) -> FeatureBatch {
        FeatureBatch::new(v).unwrap()
    }

    #[test]
    fn zero_classifier_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut c = Classifier::new(&mut rng, 3, 4, ClassMode::Softmax);
        c.fill(0.0);
        let p = c.classify(&feats(array![[1.0, -2.0, 0.5]])).unwrap();
        for v in p.values.iter() {
            assert!((v - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn hand_computed_softmax() {
        // logits = [1*1 + 2*0 + 0.5, 1*(-1) + 2*1 + 0] = [1.5, 1.0]
        let c = Classifier {
            linear: Linear {
                weight: array![[1.0, 0.0], [-1.0, 1.0]],
                bias: array![0.5, 0.0],
            },
            mode: ClassMode::Softmax,
        };
        let p = c.classify(&feats(array![[1.0, 2.0]])).unwrap();
        let e0 = 1.5f64.exp();
        let e1 = 1.0f64.exp();
        assert!((p.values[[0, 0]] - e0 / (e0 + e1)).abs() < 1e-15);
        assert!((p.values[[0, 1]] - e1 / (e0 + e1)).abs() < 1e-15);
    }

    #[test]
    fn classifier_dim_mismatch_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let c = Classifier::new(&mut rng, 3, 2, ClassMode::Softmax);
        assert!(c.classify(&feats(array![[1.0, 2.0]])).is_err());
    }

    #[test]
    fn zero_discriminator_outputs_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut d = Discriminator::new(&mut rng, 4, 2);
        d.fill(0.0);
        let p = d.discriminate(&feats(Array2::from_elem((3, 4), 7.0))).unwrap();
        assert!(p.values.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn discriminator_output_in_open_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut d = Discriminator::new(&mut rng, 2, 2);
        d.fill(50.0);
        let p = d.discriminate(&feats(array![[1e3, 1e3], [-1e3, -1e3]])).unwrap();
        assert!(p.values.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn zero_actor_gives_half_and_keeps_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut m = MaskActor::new(&mut rng, 5);
        m.fill(0.0);
        let p = m.mask_probs(&feats(Array2::from_elem((2, 5), 1.0))).unwrap();
        assert_eq!(p.values().dim(), (2, 5));
        assert!(p.values().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn actor_probability_is_monotone_in_logit() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut m = MaskActor::new(&mut rng, 3);
        let x = feats(array![[0.3, -0.2, 0.9]]);
        let before = m.mask_probs(&x).unwrap().values()[[0, 1]];
        m.linear.bias[1] += 0.1;
        let after = m.mask_probs(&x).unwrap().values()[[0, 1]];
        assert!(after > before);
    }

    #[test]
    fn zero_critic_returns_final_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut c = Critic::new(&mut rng, 4, 2);
        c.fill(0.0);
        let v = c.value(&feats(Array2::from_elem((3, 4), 1.0))).unwrap();
        assert_eq!(v.len(), 3);
        assert!(v.iter().all(|&x| x == 0.0));
        c.net.output.bias[0] = 0.25;
        assert!(c.value(&feats(Array2::from_elem((1, 4), 1.0))).unwrap()[0] == 0.25);
    }
}
