//! Per-sample rewards for the mask actor and the advantage against the
//! critic's prediction.

use ndarray::{Array1, Axis};
use serde::{Deserialize, Serialize};

use crate::corpus::Domain;
use crate::error::{shape_err, Error, Result};
use crate::models::{softplus, ClassProbs, Discriminator, DomainProbs, FeatureBatch, MaskMatrix};

/// How the consistency term enters the total reward.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConsistencySign {
    /// `r_total = r_d - lambda_c * r_c + lambda_reg * r_reg`.
    #[default]
    Penalty,
    /// `r_total = r_d + lambda_c * r_c + lambda_reg * r_reg`, for comparison.
    Bonus,
}

impl std::str::FromStr for ConsistencySign {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "penalty" => Ok(Self::Penalty),
            "bonus" => Ok(Self::Bonus),
            other => Err(Error::Config(format!("unknown consistency sign `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    pub lambda_c: f64,
    /// May be negative to penalize kept features instead.
    pub lambda_reg: f64,
    pub consistency_sign: ConsistencySign,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            lambda_c: 1.0,
            lambda_reg: 0.1,
            consistency_sign: ConsistencySign::Penalty,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RewardBundle {
    pub r_d: Array1<f64>,
    pub r_c: Array1<f64>,
    pub r_reg: Array1<f64>,
    pub r_total: Array1<f64>,
    pub r_p: Array1<f64>,
    pub advantage: Array1<f64>,
}

/// Binary cross-entropy of the discriminator against the true domain
/// (source = 1, target = 0), from probabilities.
pub fn domain_cross_entropy(probs: &DomainProbs, domain: Domain) -> Array1<f64> {
    match domain {
        Domain::Source => probs.values.mapv(|p| -p.ln()),
        Domain::Target => probs.values.mapv(|p| -(1.0 - p).ln()),
    }
}

/// Discriminator cross-entropy on masked features of each domain; higher
/// means the discriminator is more confused. Computed from logits.
pub fn domain_reward(
    masked_src: &FeatureBatch,
    masked_tgt: &FeatureBatch,
    discriminator: &Discriminator,
) -> Result<(Array1<f64>, Array1<f64>)> {
    let (z_src, _) = discriminator.logits(masked_src)?;
    let (z_tgt, _) = discriminator.logits(masked_tgt)?;
    Ok((z_src.mapv(|z| softplus(-z)), z_tgt.mapv(softplus)))
}

/// Mean absolute difference between the two probability rows, per sample.
pub fn consistency_reward(full: &ClassProbs, masked: &ClassProbs) -> Result<Array1<f64>> {
    if full.mode != masked.mode {
        return Err(Error::Config("class probability modes differ".into()));
    }
    if full.values.dim() != masked.values.dim() {
        return Err(shape_err(
            format!("{:?}", full.values.dim()),
            format!("{:?}", masked.values.dim()),
        ));
    }
    Ok((&full.values - &masked.values)
        .mapv(f64::abs)
        .mean_axis(Axis(1))
        .unwrap_or_else(|| Array1::zeros(0)))
}

/// Fraction of kept features per sample.
pub fn regularization_reward(mask: &MaskMatrix) -> Array1<f64> {
    mask.values()
        .mean_axis(Axis(1))
        .unwrap_or_else(|| Array1::zeros(0))
}

/// Combines the reward terms and subtracts the critic prediction.
pub fn bundle(
    r_d: Array1<f64>,
    r_c: Array1<f64>,
    r_reg: Array1<f64>,
    r_p: Array1<f64>,
    weights: &RewardWeights,
) -> Result<RewardBundle> {
    let n = r_d.len();
    for (name, len) in [("r_c", r_c.len()), ("r_reg", r_reg.len()), ("r_p", r_p.len())] {
        if len != n {
            return Err(shape_err(format!("{name} of length {n}"), len));
        }
    }
    let sign = match weights.consistency_sign {
        ConsistencySign::Penalty => -1.0,
        ConsistencySign::Bonus => 1.0,
    };
    let r_total = &r_d + &(sign * weights.lambda_c * &r_c) + &(weights.lambda_reg * &r_reg);
    let advantage = &r_total - &r_p;
    Ok(RewardBundle {
        r_d,
        r_c,
        r_reg,
        r_total,
        r_p,
        advantage,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ClassMode;
    use ndarray::{array, Array2};
    use proptest::prelude::*;

    fn probs(v: Array2<f64>) -> ClassProbs {
        ClassProbs {
            values: v,
            mode: ClassMode::Softmax,
        }
    }

    #[test]
    fn uniform_discriminator_gives_ln2() {
        let p = DomainProbs {
            values: array![0.5, 0.5],
        };
        for d in [Domain::Source, Domain::Target] {
            for v in domain_cross_entropy(&p, d) {
                assert!((v - 2f64.ln()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn hand_cross_entropy() {
        let src = domain_cross_entropy(&DomainProbs { values: array![0.8] }, Domain::Source);
        let tgt = domain_cross_entropy(&DomainProbs { values: array![0.1] }, Domain::Target);
        assert!((src[0] - 0.22314355131420976).abs() < 1e-12);
        assert!((tgt[0] - 0.10536051565782628).abs() < 1e-12);
    }

    #[test]
    fn confident_correct_discriminator_gives_near_zero() {
        let p = DomainProbs {
            values: array![1.0 - 1e-12],
        };
        assert!(domain_cross_entropy(&p, Domain::Source)[0] < 1e-11);
    }

    #[test]
    fn consistency_examples() {
        let a = probs(array![[0.7, 0.3]]);
        let b = probs(array![[0.5, 0.5]]);
        assert!((consistency_reward(&a, &b).unwrap()[0] - 0.2).abs() < 1e-12);
        assert_eq!(consistency_reward(&a, &a).unwrap()[0], 0.0);
        assert_eq!(
            consistency_reward(&a, &b).unwrap(),
            consistency_reward(&b, &a).unwrap()
        );
    }

    #[test]
    fn consistency_rejects_mode_mismatch() {
        let a = probs(array![[0.7, 0.3]]);
        let b = ClassProbs {
            values: array![[0.7, 0.3]],
            mode: ClassMode::MultilabelSigmoid,
        };
        assert!(consistency_reward(&a, &b).is_err());
    }

    #[test]
    fn regularization_counts_kept_features() {
        let m = MaskMatrix::new(array![
            [1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0],
            [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            [1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0]
        ])
        .unwrap();
        assert_eq!(regularization_reward(&m), array![1.0, 0.0, 0.5]);
    }

    #[test]
    fn bundle_arithmetic() {
        let w = RewardWeights {
            lambda_c: 1.0,
            lambda_reg: 0.1,
            consistency_sign: ConsistencySign::Penalty,
        };
        let b = bundle(array![0.693], array![0.0], array![1.0], array![0.0], &w).unwrap();
        assert!((b.r_total[0] - 0.793).abs() < 1e-12);
        assert!((b.advantage[0] - 0.793).abs() < 1e-12);

        let exact = bundle(array![0.5], array![0.2], array![0.4], array![0.34], &w).unwrap();
        assert!(exact.advantage[0].abs() < 1e-12);
    }

    #[test]
    fn zero_lambda_reg_ignores_mask_size() {
        let w = RewardWeights {
            lambda_reg: 0.0,
            ..RewardWeights::default()
        };
        let a = bundle(array![0.3], array![0.1], array![0.0], array![0.0], &w).unwrap();
        let b = bundle(array![0.3], array![0.1], array![1.0], array![0.0], &w).unwrap();
        assert_eq!(a.r_total, b.r_total);
    }

    #[test]
    fn bundle_length_mismatch_errors() {
        let w = RewardWeights::default();
        assert!(bundle(array![0.3, 0.1], array![0.1], array![0.0], array![0.0], &w).is_err());
    }

    #[test]
    fn best_responding_discriminator_outputs_half() {
        // When source and target rows are indistinguishable the discriminator
        // shares one output p for both; its loss -ln p - ln(1 - p) is the
        // pair's reward. The best response is p = 0.5, conceding 2 ln 2,
        // the largest reward the actor can secure against it.
        let pair = |p: f64| {
            let v = DomainProbs { values: array![p] };
            domain_cross_entropy(&v, Domain::Source)[0] + domain_cross_entropy(&v, Domain::Target)[0]
        };
        let sweep: Vec<f64> = (1..1000).map(|i| i as f64 / 1000.0).collect();
        let best = sweep
            .iter()
            .copied()
            .min_by(|a, b| pair(*a).total_cmp(&pair(*b)))
            .unwrap();
        assert_eq!(best, 0.5);
        assert!((pair(best) - 2.0 * 2f64.ln()).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn bundle_is_linear(a in -2.0f64..2.0, b in -2.0f64..2.0, c in 0.0f64..1.0, k in -3.0f64..3.0) {
            let w = RewardWeights::default();
            let base = bundle(array![a], array![b.abs()], array![c], array![0.0], &w).unwrap();
            let scaled = bundle(array![k * a], array![k * b.abs()], array![k * c], array![0.0], &w).unwrap();
            prop_assert!((scaled.r_total[0] - k * base.r_total[0]).abs() < 1e-12);
        }

        #[test]
        fn regularization_ignores_column_order(bits in proptest::collection::vec(0u8..2, 16), rot in 0usize..16) {
            let row: Vec<f64> = bits.iter().map(|&b| b as f64).collect();
            let mut rotated = row.clone();
            rotated.rotate_left(rot);
            let a = MaskMatrix::new(Array2::from_shape_vec((1, 16), row).unwrap()).unwrap();
            let b = MaskMatrix::new(Array2::from_shape_vec((1, 16), rotated).unwrap()).unwrap();
            prop_assert_eq!(regularization_reward(&a), regularization_reward(&b));
        }

        #[test]
        fn consistency_zero_iff_equal(p in 0.0f64..1.0, q in 0.0f64..1.0) {
            let a = probs(array![[p, 1.0 - p]]);
            let b = probs(array![[q, 1.0 - q]]);
            let r = consistency_reward(&a, &b).unwrap()[0];
            prop_assert!(r >= 0.0);
            prop_assert_eq!(r == 0.0, p == q);
        }
    }
}
