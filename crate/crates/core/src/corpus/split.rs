use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{ClassDistribution, LabeledDataset};
use crate::error::{Error, Result};

/// Integer class counts summing to `n`, each within one of `n * p[c]`.
/// Leftover units go to the largest fractional parts, ties to the lower class.
pub fn largest_remainder_counts(dist: &ClassDistribution, n: usize) -> Vec<usize> {
    let exact: Vec<f64> = dist.probs().iter().map(|p| p * n as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..exact.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &c in order.iter().take(n.saturating_sub(assigned)) {
        counts[c] += 1;
    }
    counts
}

/// Samples `n` labeled documents without replacement so that the class
/// counts follow `target_dist`.
pub fn make_imbalanced_split(
    dataset: &LabeledDataset,
    target_dist: &ClassDistribution,
    n: usize,
    seed: u64,
) -> Result<LabeledDataset> {
    if target_dist.num_classes() != dataset.num_classes() {
        return Err(Error::Shape {
            expected: format!("{} classes", dataset.num_classes()),
            got: format!("{} classes", target_dist.num_classes()),
        });
    }
    if dataset.label_distribution().is_none() {
        return Err(Error::Schema("cannot split an unlabeled dataset".into()));
    }

    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); dataset.num_classes()];
    for (i, doc) in dataset.documents().iter().enumerate() {
        if let Some(l) = doc.label() {
            by_class[l].push(i);
        }
    }

    let counts = largest_remainder_counts(target_dist, n);
    for (class, (&required, pool)) in counts.iter().zip(&by_class).enumerate() {
        if pool.len() < required {
            return Err(Error::Capacity {
                class,
                available: pool.len(),
                required,
            });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = Vec::with_capacity(n);
    for (pool, &required) in by_class.iter_mut().zip(&counts) {
        pool.shuffle(&mut rng);
        picked.extend_from_slice(&pool[..required]);
    }
    picked.shuffle(&mut rng);
    dataset.select(&picked)
}
