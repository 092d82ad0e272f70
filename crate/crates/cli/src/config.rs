//! Flat `key = value` experiment files.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown keys are
//! an error. Command-line flags are applied after the file and win.
//!
//! | key | meaning |
//! |-----|---------|
//! | `method` | `uram`, `no-adapt` or `dann` |
//! | `seeds` | comma-separated integers |
//! | `out` | output directory |
//! | `source`, `target` | dataset files (`.jsonl` or `.csv`) |
//! | `synth.*` | synthetic pair used when no dataset files are given |
//! | `learning_rate`, `batch_size`, `max_iterations` | optimizer and loop |
//! | `lambda_c`, `lambda_reg`, `consistency_sign`, `entropy_weight` | rewards |
//! | `disable_rd`, `disable_rc` | ablation switches |
//! | `grad_clip`, `step_order`, `holdout_fraction` | loop details |
//! | `eval_path` (`encoder` or `masked`), `f1_mode` (`macro` or `micro`) | evaluation |
//! | `masked_supervision`, `masked_discriminator` | what steps A and B read |
//! | `encoder`, `embed_dim`, `hidden_dim`, `feature_dim`, `class_mode` | model |
//! | `grl_strength` | DANN reversal strength |
//! | `pretrained` | word-vector text file |

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use uram_core::corpus::{ClassDistribution, SynthConfig};
use uram_core::training::{Method, TrainConfig};

#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    Files { source: PathBuf, target: PathBuf },
    Synth(SynthConfig),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub method: Method,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    pub data: DataSource,
    pub train: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            method: Method::Uram,
            seeds: vec![0],
            out: PathBuf::from("runs"),
            data: DataSource::Synth(SynthConfig::default()),
            train: TrainConfig::default(),
        }
    }
}

fn parse_bool(v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => bail!("expected a boolean, got `{v}`"),
    }
}

fn parse_list<T: std::str::FromStr>(v: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    v.split(',')
        .map(|s| s.trim().parse::<T>().map_err(|e| anyhow::anyhow!("`{s}`: {e}")))
        .collect()
}

fn parse<T: std::str::FromStr>(v: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| anyhow::anyhow!("`{v}`: {e}"))
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_str_with_base(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Parses config text; relative dataset paths resolve against `base`.
    pub fn from_str_with_base(text: &str, base: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        let mut source = None;
        let mut target = None;
        let mut synth = SynthConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .with_context(|| format!("line {}: expected `key = value`", n + 1))?;
            let (key, value) = (key.trim(), value.trim());
            let resolve = |v: &str| {
                let p = PathBuf::from(v);
                if p.is_relative() {
                    base.join(p)
                } else {
                    p
                }
            };
            match key {
                "source" => {
                    source = Some(resolve(value));
                    Ok(())
                }
                "target" => {
                    target = Some(resolve(value));
                    Ok(())
                }
                "out" => {
                    cfg.out = PathBuf::from(value);
                    Ok(())
                }
                "pretrained" => {
                    cfg.train.pretrained = Some(resolve(value));
                    Ok(())
                }
                k if k.starts_with("synth.") => set_synth(&mut synth, &k["synth.".len()..], value),
                k => cfg.set(k, value),
            }
            .with_context(|| format!("line {}: key `{key}`", n + 1))?;
        }
        cfg.data = match (source, target) {
            (Some(source), Some(target)) => DataSource::Files { source, target },
            (None, None) => DataSource::Synth(synth),
            _ => bail!("`source` and `target` must be given together"),
        };
        Ok(cfg)
    }

    /// Sets one scalar key; shared by the file parser and flag overrides.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let t = &mut self.train;
        match key {
            "method" => self.method = parse(value)?,
            "seeds" => self.seeds = parse_list(value)?,
            "seed" => self.seeds = vec![parse(value)?],
            "learning_rate" => t.learning_rate = parse(value)?,
            "batch_size" => t.batch_size = parse(value)?,
            "max_iterations" => t.max_iterations = parse(value)?,
            "lambda_c" => t.rewards.lambda_c = parse(value)?,
            "lambda_reg" => t.rewards.lambda_reg = parse(value)?,
            "consistency_sign" => t.rewards.consistency_sign = parse(value)?,
            "entropy_weight" => t.entropy_weight = parse(value)?,
            "disable_rd" => t.disable_r_d = parse_bool(value)?,
            "disable_rc" => t.disable_r_c = parse_bool(value)?,
            "grad_clip" => t.grad_clip = parse(value)?,
            "step_order" => t.step_order = parse(value)?,
            "holdout_fraction" => t.holdout_fraction = parse(value)?,
            "eval_path" => t.eval_path = parse(value)?,
            "f1_mode" => t.f1_mode = parse(value)?,
            "masked_supervision" => t.masked_supervision = parse_bool(value)?,
            "masked_discriminator" => t.masked_discriminator = parse_bool(value)?,
            "encoder" => t.model.encoder = parse(value)?,
            "embed_dim" => t.model.embed_dim = parse(value)?,
            "hidden_dim" => t.model.hidden_dim = parse(value)?,
            "feature_dim" => t.model.feature_dim = parse(value)?,
            "class_mode" => t.model.class_mode = parse(value)?,
            "grl_strength" => t.grl.reversal_strength = parse(value)?,
            _ => bail!("unknown key"),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            bail!("at least one seed is required");
        }
        self.train.validate()?;
        Ok(())
    }
}

fn set_synth(s: &mut SynthConfig, key: &str, value: &str) -> Result<()> {
    match key {
        "num_classes" => s.num_classes = parse(value)?,
        "vocab_size" => s.vocab_size = parse(value)?,
        "doc_len" => s.doc_len = parse(value)?,
        "shift_strength" => s.shift_strength = parse(value)?,
        "n_per_domain" => s.n_per_domain = parse(value)?,
        "source_dist" => s.source_dist = ClassDistribution::new(parse_list(value)?)?,
        "target_dist" => s.target_dist = ClassDistribution::new(parse_list(value)?)?,
        _ => bail!("unknown synth key"),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_keys_and_comments() {
        let text = "# demo\nmethod = dann\nseeds = 1, 2\nmax_iterations=3\nsynth.shift_strength = 0.8\nsynth.source_dist = 0.5,0.5\n";
        let cfg = ExperimentConfig::from_str_with_base(text, Path::new("/x")).unwrap();
        assert_eq!(cfg.method, Method::Dann);
        assert_eq!(cfg.seeds, vec![1, 2]);
        assert_eq!(cfg.train.max_iterations, 3);
        match cfg.data {
            DataSource::Synth(s) => {
                assert_eq!(s.shift_strength, 0.8);
                assert_eq!(s.source_dist.probs(), &[0.5, 0.5]);
            }
            _ => panic!("expected synth data"),
        }
    }

    #[test]
    fn relative_paths_resolve_against_config_dir() {
        let cfg = ExperimentConfig::from_str_with_base("source = a.jsonl\ntarget = /abs/b.jsonl\n", Path::new("/cfg")).unwrap();
        assert_eq!(
            cfg.data,
            DataSource::Files {
                source: PathBuf::from("/cfg/a.jsonl"),
                target: PathBuf::from("/abs/b.jsonl"),
            }
        );
    }

    #[test]
    fn rejects_bad_input() {
        let base = Path::new(".");
        assert!(ExperimentConfig::from_str_with_base("bogus = 1", base).is_err());
        assert!(ExperimentConfig::from_str_with_base("method = mcd", base).is_err());
        assert!(ExperimentConfig::from_str_with_base("no equals sign", base).is_err());
        assert!(ExperimentConfig::from_str_with_base("source = a.jsonl", base).is_err());
        let cfg = ExperimentConfig::from_str_with_base("seeds = ", base);
        assert!(cfg.is_err());
    }
}
