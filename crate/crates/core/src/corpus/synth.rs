//! Synthetic shifted domain pairs.
//!
//! The vocabulary is cut into blocks: class-indicative tokens shared by both
//! domains, class-indicative tokens particular to each domain ("flavor"),
//! filler particular to each domain, and common filler. A source document of
//! class `c` draws its tokens from a class-conditional profile over these
//! blocks. The target profile is the convex mix
//! `(1 - s) * source_profile[c] + s * domain_profile[c]`, where the domain
//! profile swaps the source flavor and filler blocks for the target ones.

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::split::largest_remainder_counts;
use super::{ClassDistribution, Document, Domain, LabelMap, LabeledDataset};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub num_classes: usize,
    pub vocab_size: usize,
    pub doc_len: usize,
    pub shift_strength: f64,
    pub source_dist: ClassDistribution,
    pub target_dist: ClassDistribution,
    pub n_per_domain: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_classes: 2,
            vocab_size: 600,
            doc_len: 24,
            shift_strength: 0.5,
            source_dist: ClassDistribution::new(vec![0.8, 0.2]).unwrap(),
            target_dist: ClassDistribution::new(vec![0.3, 0.7]).unwrap(),
            n_per_domain: 2000,
            seed: 0,
        }
    }
}

// Probability mass per block in a class-conditional profile.
const OWN_SHARED: f64 = 0.16;
const OTHER_SHARED: f64 = 0.06;
const OWN_FLAVOR: f64 = 0.12;
const OTHER_FLAVOR: f64 = 0.04;
const DOMAIN_FILLER: f64 = 0.20;

struct Blocks {
    block: usize,
    num_classes: usize,
}

impl Blocks {
    fn shared(&self, c: usize) -> std::ops::Range<usize> {
        let start = c * self.block;
        start..start + self.block
    }

    fn flavor(&self, domain: Domain, c: usize) -> std::ops::Range<usize> {
        let offset = match domain {
            Domain::Source => self.num_classes,
            Domain::Target => 2 * self.num_classes,
        };
        let start = (offset + c) * self.block;
        start..start + self.block
    }

    fn filler(&self, domain: Domain) -> std::ops::Range<usize> {
        let offset = match domain {
            Domain::Source => 3 * self.num_classes,
            Domain::Target => 3 * self.num_classes + 1,
        };
        let start = offset * self.block;
        start..start + self.block
    }

    fn common(&self, vocab_size: usize) -> std::ops::Range<usize> {
        (3 * self.num_classes + 2) * self.block..vocab_size
    }
}

fn spread(weights: &mut [f64], range: std::ops::Range<usize>, mass: f64) {
    let width = range.len() as f64;
    for w in &mut weights[range] {
        *w += mass / width;
    }
}

fn domain_profile(blocks: &Blocks, vocab_size: usize, domain: Domain, class: usize) -> Vec<f64> {
    let k = blocks.num_classes;
    let mut w = vec![0.0; vocab_size];
    let others = (k - 1).max(1) as f64;
    for c in 0..k {
        if c == class {
            spread(&mut w, blocks.shared(c), OWN_SHARED);
            spread(&mut w, blocks.flavor(domain, c), OWN_FLAVOR);
        } else {
            spread(&mut w, blocks.shared(c), OTHER_SHARED / others);
            spread(&mut w, blocks.flavor(domain, c), OTHER_FLAVOR / others);
        }
    }
    spread(&mut w, blocks.filler(domain), DOMAIN_FILLER);
    let used: f64 = w.iter().sum();
    spread(&mut w, blocks.common(vocab_size), 1.0 - used);
    w
}

fn token_name(id: usize) -> String {
    format!("w{id:04}")
}

fn generate(
    rng: &mut ChaCha8Rng,
    profiles: &[WeightedIndex<f64>],
    dist: &ClassDistribution,
    n: usize,
    doc_len: usize,
    domain: Domain,
    labels: &LabelMap,
) -> Result<LabeledDataset> {
    let counts = largest_remainder_counts(dist, n);
    let mut classes: Vec<usize> = counts
        .iter()
        .enumerate()
        .flat_map(|(c, &k)| std::iter::repeat(c).take(k))
        .collect();
    rand::seq::SliceRandom::shuffle(classes.as_mut_slice(), rng);
    let docs = classes
        .into_iter()
        .map(|c| {
            let text = (0..doc_len)
                .map(|_| token_name(profiles[c].sample(rng)))
                .collect::<Vec<_>>()
                .join(" ");
            Document::new(text, Some(c), domain)
        })
        .collect::<Result<Vec<_>>>()?;
    LabeledDataset::new(docs, labels.clone(), domain)
}

/// Generates a (source, target) pair with feature shift controlled by
/// `shift_strength` and class shift given by the two label distributions.
/// Target documents are labeled for evaluation only.
pub fn synth_domain_pair(config: &SynthConfig) -> Result<(LabeledDataset, LabeledDataset)> {
    let k = config.num_classes;
    if k < 2 {
        return Err(Error::Config("synthetic data needs at least 2 classes".into()));
    }
    if config.source_dist.num_classes() != k || config.target_dist.num_classes() != k {
        return Err(Error::Config(
            "label distributions must have num_classes entries".into(),
        ));
    }
    if !config.shift_strength.is_finite() || !(0.0..=1.0).contains(&config.shift_strength) {
        return Err(Error::Config(format!(
            "shift_strength must lie in [0, 1], got {}",
            config.shift_strength
        )));
    }
    let block = config.vocab_size / (3 * k + 3);
    if block == 0 {
        return Err(Error::Config(format!(
            "vocab_size {} too small for {k} classes",
            config.vocab_size
        )));
    }
    if config.doc_len == 0 {
        return Err(Error::Config("doc_len must be positive".into()));
    }
    let blocks = Blocks {
        block,
        num_classes: k,
    };
    let v = config.vocab_size;
    let s = config.shift_strength;

    let mut source_profiles = Vec::with_capacity(k);
    let mut target_profiles = Vec::with_capacity(k);
    for c in 0..k {
        let src = domain_profile(&blocks, v, Domain::Source, c);
        let dom = domain_profile(&blocks, v, Domain::Target, c);
        let tgt: Vec<f64> = src
            .iter()
            .zip(&dom)
            .map(|(a, b)| (1.0 - s) * a + s * b)
            .collect();
        source_profiles.push(WeightedIndex::new(&src).expect("valid profile"));
        target_profiles.push(WeightedIndex::new(&tgt).expect("valid profile"));
    }

    let labels = LabelMap::numeric(k);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let source = generate(
        &mut rng,
        &source_profiles,
        &config.source_dist,
        config.n_per_domain,
        config.doc_len,
        Domain::Source,
        &labels,
    )?;
    let target = generate(
        &mut rng,
        &target_profiles,
        &config.target_dist,
        config.n_per_domain,
        config.doc_len,
        Domain::Target,
        &labels,
    )?;
    Ok((source, target))
}
