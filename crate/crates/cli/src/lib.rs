//! Command-line front end: `run`, `simulate` and `export`.
//!
//! Exit codes: 0 on success, 2 for configuration or usage errors, 3 when a
//! training iteration aborts, 1 for anything else (I/O and the like).

pub mod export;
pub mod output;
pub mod run;
pub mod simulate;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use stso_core::StsoError;

#[derive(Debug, Parser)]
#[command(name = "stso", version, about = "Co-design of SPDE feedback policies and actuator placement")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct ConfigArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// `key=value` overrides; keys are dotted paths or K, R, J, T, dt, rho, N, mode, seed.
    #[arg(long = "override", value_name = "KEY=VALUE", num_args = 1.., action = clap::ArgAction::Append)]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl ConfigArgs {
    /// Overrides with `--seed` folded in as the last one.
    pub fn all_overrides(&self) -> Vec<String> {
        let mut o = self.overrides.clone();
        if let Some(seed) = self.seed {
            o.push(format!("seed={seed}"));
        }
        o
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train policy and actuators, writing report, checkpoints and a final bundle.
    Run {
        #[command(flatten)]
        args: ConfigArgs,
        /// Continue from a checkpoint directory.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Roll out a zero or checkpointed policy and write trajectory CSVs.
    Simulate {
        #[command(flatten)]
        args: ConfigArgs,
        /// `zero` or a checkpoint directory.
        #[arg(long, default_value = "zero")]
        policy: String,
        #[arg(long, default_value_t = 10)]
        rollouts: usize,
        /// Switch the noise off.
        #[arg(long)]
        no_noise: bool,
    },
    /// Turn a run directory into plot-ready CSV.
    Export {
        /// Run directory written by `run`.
        run_dir: PathBuf,
        #[arg(long, value_enum)]
        kind: ExportKind,
        /// Output file (defaults to `<run_dir>/export/<kind>.csv`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Which evaluation rollout feeds the contour export.
        #[arg(long, value_enum, default_value_t = Source::Noise)]
        source: Source,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum ExportKind {
    Contour,
    FinalSnapshot,
    Convergence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Source {
    Noise,
    Clean,
}

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_ABORTED: u8 = 3;

/// Map an error chain to the process exit code.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<StsoError>() {
            return match e {
                StsoError::Config { .. } => EXIT_CONFIG,
                StsoError::Aborted { .. } => EXIT_ABORTED,
                _ => 1,
            };
        }
        if cause.downcast_ref::<UsageError>().is_some() {
            return EXIT_CONFIG;
        }
    }
    1
}

/// Bad command-line input that clap cannot catch on its own.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(UsageError(msg.into()))
}

pub fn dispatch(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run { args, resume } => run::cmd_run(&args, resume.as_deref()).map(|_| ()),
        Command::Simulate { args, policy, rollouts, no_noise } => {
            simulate::cmd_simulate(&args, &policy, rollouts, !no_noise).map(|_| ())
        }
        Command::Export { run_dir, kind, out, source } => export::cmd_export(&run_dir, kind, out.as_deref(), source).map(|_| ()),
    }
}

pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
