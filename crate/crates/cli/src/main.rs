use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use uram_cli::{cmd_ablate, cmd_eval, cmd_shift_report, cmd_synth, cmd_train, exit_code, DataSource, ExperimentConfig};
use uram_core::analysis::{F1Mode, Representation};
use uram_core::corpus::SynthConfig;

#[derive(Parser)]
#[command(name = "uram", version, about = "Feature-masking domain adaptation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model per seed.
    Train(RunArgs),
    /// Score a checkpoint on a labeled dataset.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long, default_value = "macro")]
        f1_mode: F1Mode,
        /// Classify thresholded-mask features instead of raw encoder output.
        #[arg(long)]
        masked_path: bool,
    },
    /// Domain-wise and category-wise discrepancy under a checkpoint.
    ShiftReport {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Measure thresholded-mask features.
        #[arg(long)]
        masked_path: bool,
    },
    /// Full model against -R_d and -R_c for every seed.
    Ablate(RunArgs),
    /// Write a synthetic source/target pair.
    Synth {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    f1_mode: Option<String>,
    #[arg(long)]
    masked_path: bool,
    #[arg(long)]
    disable_rd: bool,
    #[arg(long)]
    disable_rc: bool,
    #[arg(long, allow_hyphen_values = true)]
    lambda_reg: Option<String>,
    #[arg(long)]
    entropy_weight: Option<String>,
}

impl RunArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::from_file(&self.config)?;
        let overrides = [
            ("seed", self.seed.map(|s| s.to_string())),
            ("method", self.method.clone()),
            ("f1_mode", self.f1_mode.clone()),
            ("lambda_reg", self.lambda_reg.clone()),
            ("entropy_weight", self.entropy_weight.clone()),
            ("eval_path", self.masked_path.then(|| "masked".to_string())),
            ("disable_rd", self.disable_rd.then(|| "true".to_string())),
            ("disable_rc", self.disable_rc.then(|| "true".to_string())),
        ];
        for (key, value) in overrides {
            if let Some(v) = value {
                cfg.set(key, &v).map_err(|e| e.context(format!("flag --{}", key.replace('_', "-"))))?;
            }
        }
        if let Some(out) = &self.out {
            cfg.out = out.clone();
        }
        Ok(cfg)
    }
}

fn repr(masked: bool) -> Representation {
    if masked {
        Representation::Masked
    } else {
        Representation::Encoder
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "nan".into())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => {
            let cfg = args.load()?;
            for log in cmd_train(&cfg)? {
                println!("seed={} target_f1={}", log.seed, fmt_opt(log.final_target_f1()));
            }
        }
        Command::Eval {
            checkpoint,
            data,
            out,
            f1_mode,
            masked_path,
        } => {
            let outcome = cmd_eval(&checkpoint, &data, repr(masked_path), f1_mode, &out)?;
            println!("target_f1={:.4}", outcome.f1);
        }
        Command::ShiftReport {
            checkpoint,
            source,
            target,
            out,
            masked_path,
        } => {
            let r = cmd_shift_report(&checkpoint, &source, &target, repr(masked_path), &out)?;
            println!("domain_wise={} category_wise={}", r.domain_wise, r.category_wise);
        }
        Command::Ablate(args) => {
            let cfg = args.load()?;
            let (table, _) = cmd_ablate(&cfg)?;
            print!("{}", table.to_text());
        }
        Command::Synth { config, seed, out } => {
            let mut synth = match config {
                Some(p) => match ExperimentConfig::from_file(&p)?.data {
                    DataSource::Synth(s) => s,
                    DataSource::Files { .. } => anyhow::bail!("config names dataset files, not synthetic data"),
                },
                None => SynthConfig::default(),
            };
            if let Some(s) = seed {
                synth.seed = s;
            }
            let (s, t) = cmd_synth(&synth, &out)?;
            println!("source={} target={}", s.display(), t.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            if let Some(uram_core::Error::NonFinite { snapshot: Some(p), .. }) =
                err.chain().find_map(|c| c.downcast_ref::<uram_core::Error>())
            {
                eprintln!("snapshot: {}", p.display());
            }
            ExitCode::from(exit_code(&err) as u8)
        }
    }
}
