use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ModelConfig, ParameterSet, Parameterized};
use crate::corpus::Vocabulary;
use crate::error::{Error, Result};

/// All five parameter groups, the model configuration and its hash, the
/// shared vocabulary and the sampling RNG state, stored as one JSON document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub method: String,
    pub config: ModelConfig,
    pub config_hash: String,
    pub vocab: Vocabulary,
    pub params: ParameterSet,
    pub rng_state: ChaCha8Rng,
}

impl Checkpoint {
    pub fn new(
        method: impl Into<String>,
        config: ModelConfig,
        vocab: Vocabulary,
        params: ParameterSet,
        rng_state: ChaCha8Rng,
    ) -> Self {
        Self {
            method: method.into(),
            config_hash: config_hash(&config),
            config,
            vocab,
            params,
            rng_state,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut w, self)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut ck: Checkpoint = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        ck.vocab = ck.vocab.rebuild_index()?;
        ck.validate()?;
        Ok(ck)
    }

    /// Loads and checks the stored configuration against `expected`.
    pub fn load_into(path: &Path, expected: &ModelConfig) -> Result<Self> {
        let ck = Self::load(path)?;
        if ck.config_hash != config_hash(expected) {
            return Err(Error::Config(format!(
                "checkpoint {} was written for a different model configuration",
                path.display()
            )));
        }
        Ok(ck)
    }

    /// Hash and tensor shapes agree with the stored configuration.
    pub fn validate(&self) -> Result<()> {
        if self.config_hash != config_hash(&self.config) {
            return Err(Error::Config("checkpoint config hash does not match its config".into()));
        }
        let mut rng = rand::SeedableRng::seed_from_u64(0);
        let fresh = ParameterSet::new(&self.config, &mut rng as &mut ChaCha8Rng)?;
        for name in super::GROUP_NAMES {
            let a = shapes(fresh.group(name).expect("known group"));
            let b = shapes(self.params.group(name).expect("known group"));
            if a != b {
                return Err(Error::Config(format!(
                    "parameter group `{name}` does not match the configuration"
                )));
            }
        }
        if !self.params.all_finite() {
            return Err(Error::NonFinite {
                message: "checkpoint holds non-finite parameters".into(),
                snapshot: None,
            });
        }
        if self.params.encoder.vocab_size() != self.vocab.len() {
            return Err(Error::VocabMismatch("checkpoint vocabulary and embeddings differ".into()));
        }
        Ok(())
    }
}

fn shapes(p: &dyn Parameterized) -> Vec<(String, usize)> {
    let mut out = Vec::new();
    p.visit(&mut |name, t| out.push((name.to_string(), t.len())));
    out
}

pub fn config_hash(config: &ModelConfig) -> String {
    let bytes = serde_json::to_vec(config).expect("config serializes");
    hex::encode(Sha256::digest(&bytes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{EncoderConfig, EncoderKind};
    use rand::SeedableRng;

    fn config(d: usize) -> ModelConfig {
        ModelConfig::new(
            EncoderConfig {
                kind: EncoderKind::BagOfEmbeddings,
                vocab_size: 5,
                embed_dim: 3,
                hidden_dim: 0,
                feature_dim: d,
            },
            2,
        )
    }

    fn vocab() -> Vocabulary {
        Vocabulary::from_tokens(vec!["a".into(), "b".into(), "c".into()]).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let cfg = config(4);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let params = ParameterSet::new(&cfg, &mut rng).unwrap();
        let ck = Checkpoint::new("uram", cfg.clone(), vocab(), params, rng);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ck.json");
        ck.save(&p).unwrap();
        let back = Checkpoint::load_into(&p, &cfg).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.params.fingerprints(), ck.params.fingerprints());
        assert_eq!(back.vocab.id("b"), 3);
    }

    #[test]
    fn mismatched_config_is_rejected() {
        let cfg = config(4);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let params = ParameterSet::new(&cfg, &mut rng).unwrap();
        let ck = Checkpoint::new("uram", cfg, vocab(), params, rng);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ck.json");
        ck.save(&p).unwrap();
        assert!(Checkpoint::load_into(&p, &config(6)).is_err());
    }
}
