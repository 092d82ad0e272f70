use rand::Rng;

use super::{FeatureBatch, MaskMatrix, MaskProbs};
use crate::error::{shape_err, Result};

/// Independent Bernoulli draw per entry, row-major.
pub fn sample_mask<R: Rng>(probs: &MaskProbs, rng: &mut R) -> MaskMatrix {
    let values = probs
        .values()
        .mapv(|p| if rng.gen::<f64>() < p { 1.0 } else { 0.0 });
    MaskMatrix::new(values).expect("binary by construction")
}

/// Element-wise product `mask * features`.
pub fn apply_mask(mask: &MaskMatrix, features: &FeatureBatch) -> Result<FeatureBatch> {
    if mask.dim() != features.values().dim() {
        return Err(shape_err(
            format!("{:?}", features.values().dim()),
            format!("{:?}", mask.dim()),
        ));
    }
    Ok(FeatureBatch::new_unchecked(mask.values() * features.values()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::MASK_EPS;
    use ndarray::{array, Array2};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_and_zero_masks() {
        let f = FeatureBatch::new(array![[3.0, -2.5], [1.0, 4.0]]).unwrap();
        assert_eq!(apply_mask(&MaskMatrix::ones(2, 2), &f).unwrap(), f);
        let z = apply_mask(&MaskMatrix::zeros(2, 2), &f).unwrap();
        assert!(z.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn elementwise_definition() {
        let f = FeatureBatch::new(array![[3.0, -2.5]]).unwrap();
        let m = MaskMatrix::new(array![[1.0, 0.0]]).unwrap();
        assert_eq!(apply_mask(&m, &f).unwrap().values(), &array![[3.0, 0.0]]);
    }

    #[test]
    fn shape_mismatch_errors() {
        let f = FeatureBatch::new(array![[3.0, -2.5]]).unwrap();
        assert!(apply_mask(&MaskMatrix::ones(1, 3), &f).is_err());
    }

    #[test]
    fn same_seed_same_mask() {
        let p = MaskProbs::new(Array2::from_elem((4, 16), 0.5)).unwrap();
        let a = sample_mask(&p, &mut ChaCha8Rng::seed_from_u64(9));
        let b = sample_mask(&p, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }

    #[test]
    fn half_probability_mean_within_three_sigma() {
        // 10_000 draws, sd of the mean = 0.5 / 100 = 0.005
        let p = MaskProbs::new(Array2::from_elem((100, 100), 0.5)).unwrap();
        let m = sample_mask(&p, &mut ChaCha8Rng::seed_from_u64(1));
        let mean = m.density();
        assert!((0.485..=0.515).contains(&mean), "{mean}");
    }

    #[test]
    fn clamped_one_gives_all_ones() {
        let p = MaskProbs::new(Array2::from_elem((64, 256), 1.0 - MASK_EPS)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = sample_mask(&p, &mut rng);
        assert_eq!(m.density(), 1.0);
    }
}
