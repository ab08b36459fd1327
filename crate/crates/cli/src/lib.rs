//! `sentrisk` command-line pipeline: stage-one tree ensemble, tail flags,
//! stage-two sparse logistic risk model, evaluation and synthetic data.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::commands::{SynthKind, SynthRequest};
use crate::config::{Overrides, PipelineConfig};
use crate::error::{CliError, CliResult, EXIT_OK, EXIT_USAGE};

#[derive(Debug, Parser)]
#[command(name = "sentrisk", version = env!("SENTRISK_VERSION"), about = "Two-stage sentencing risk pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Pipeline configuration (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long = "seed.split", value_name = "SEED")]
    pub seed_split: Option<u64>,
    #[arg(long = "seed.mcmc", value_name = "SEED")]
    pub seed_mcmc: Option<u64>,
    #[arg(long = "seed.cv", value_name = "SEED")]
    pub seed_cv: Option<u64>,
    /// Tail probability of the flag rule.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Output root; stages write into subdirectories.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed_split: self.seed_split,
            seed_mcmc: self.seed_mcmc,
            seed_cv: self.seed_cv,
            alpha: self.alpha,
            out: self.out.clone(),
        }
    }

    pub fn resolve(&self) -> CliResult<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        cfg.apply(&self.overrides());
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value = "sentencing")]
    pub kind: SynthKind,
    #[arg(long, default_value_t = 20_000)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Generate without the injected irrelevant-factor effect.
    #[arg(long)]
    pub no_leak: bool,
    #[arg(long, default_value = "synth")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the stage-one ensemble and write posterior summaries.
    TrainStage1(Common),
    /// Flag rows above the conditional upper tail bound.
    Flag(Common),
    /// Fit the stage-two sparse logistic model on the flags.
    TrainStage2(Common),
    /// ROC, risk bins, AUC bands, convergence and fit diagnostics.
    Evaluate(Common),
    /// Refit stage two at alpha 0.10, 0.15, 0.20 and 0.25.
    SweepAlpha(Common),
    /// Generate a synthetic dataset with known ground truth.
    Synth(SynthArgs),
}

fn execute(command: &Command) -> (Option<PathBuf>, CliResult<PathBuf>) {
    let stage: fn(&PipelineConfig) -> CliResult<PathBuf> = match command {
        Command::TrainStage1(_) => commands::train_stage1,
        Command::Flag(_) => commands::flag,
        Command::TrainStage2(_) => commands::train_stage2,
        Command::Evaluate(_) => commands::evaluate,
        Command::SweepAlpha(_) => commands::sweep_alpha,
        Command::Synth(a) => {
            let req = SynthRequest {
                kind: a.kind,
                n: a.n,
                seed: a.seed,
                leak: !a.no_leak,
                out: a.out.clone(),
            };
            return (Some(a.out.clone()), commands::synth(&req));
        }
    };
    let (Command::TrainStage1(c)
    | Command::Flag(c)
    | Command::TrainStage2(c)
    | Command::Evaluate(c)
    | Command::SweepAlpha(c)) = command
    else {
        unreachable!("synth handled above")
    };
    match c.resolve() {
        Ok(cfg) => (Some(cfg.paths.out.clone()), stage(&cfg)),
        Err(e) => (c.out.clone(), Err(e)),
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit status. Failures are reported on stderr and, when the output
/// directory is known, in `error.json` there.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let (out, result) = execute(&cli.command);
    match result {
        Ok(dir) => {
            if let Some(out) = out {
                let _ = std::fs::remove_file(out.join("error.json"));
            }
            log::info!("wrote {}", dir.display());
            EXIT_OK
        }
        Err(e) => report(&e, out),
    }
}

fn report(e: &CliError, out: Option<PathBuf>) -> i32 {
    let rec = e.record();
    eprintln!("{}", rec.to_json());
    if let Some(dir) = out {
        rec.write_to(&dir);
    }
    rec.exit_code
}
