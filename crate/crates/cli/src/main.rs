mod commands;
mod config;
mod error;
mod output;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::ExperimentConfig;
use crate::error::CliError;

/// Markov chain order estimation with penalized maximum likelihood.
///
/// Exit status: 0 on success, 1 on invalid input or a failed check,
/// 2 on I/O errors.
#[derive(Debug, Parser)]
#[command(name = "markov-order", version)]
struct Cli {
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the master seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Overrides the output directory from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample paths and write them with a manifest.
    Simulate,
    /// Estimate the order on each replication with the first penalty.
    Estimate,
    /// Compare all configured penalties on the same paths.
    Sweep,
    /// Run the numerical checks and write report.json.
    Verify,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::Validation("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Validation(format!("--jobs: {e}")))?;
    }
    let path = cli.config.ok_or_else(|| CliError::Validation("--config is required".into()))?;
    let mut cfg = ExperimentConfig::load(&path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = cli.out {
        cfg.output = out;
    }
    match cli.command {
        Command::Simulate => commands::simulate(&cfg),
        Command::Estimate => commands::estimate(&cfg),
        Command::Sweep => commands::sweep(&cfg),
        Command::Verify => verify::verify(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
