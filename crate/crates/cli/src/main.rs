//! `sensmap` — GP-based sensitivity maps and generalized sensitivity
//! indices for functional outputs, with separation of metamodeling and
//! pick-freeze estimation error.

mod artifacts;
mod commands;
mod config;
mod pipeline;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use config::{CliError, CliResult, PipelineConfig};

#[derive(Parser)]
#[command(
    name = "sensmap",
    version,
    about = "Sensitivity maps and generalized sensitivity indices of functional \
             outputs via GP surrogates and pick-freeze estimation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML configuration file.
    #[arg(long, global = true, default_value = "config.toml")]
    config: PathBuf,
    /// Output directory (overrides the configuration).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed (overrides the configuration).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Trajectory sampling mode (overrides the configuration).
    #[arg(long, global = true, value_enum)]
    mode: Option<ModeArg>,
    /// GSI denominator covariance mode (overrides the configuration).
    #[arg(long, global = true, value_enum)]
    covariance: Option<CovarianceArg>,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate sensitivity-map and GSI error distributions.
    Run,
    /// Repeat the run over DoE-size and/or PF-size sweeps.
    Sweep,
    /// Time the basis-derived vs dimension-wise estimation cores.
    Bench,
    /// Score surrogate accuracy (Q²) on a validation split.
    Validate,
    /// Fit and persist the basis and GP hyperparameters only.
    Fit,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Batch,
    PerTrajectory,
}

#[derive(Clone, Copy, ValueEnum)]
enum CovarianceArg {
    Empirical,
    Fixed,
}

fn apply_overrides(config: &mut PipelineConfig, cli: &Cli) {
    if let Some(out) = &cli.out {
        config.out_dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        config.run.seed = seed;
    }
    if let Some(mode) = cli.mode {
        config.run.sampling = match mode {
            ModeArg::Batch => "batch".into(),
            ModeArg::PerTrajectory => "per-trajectory".into(),
        };
    }
    if let Some(cov) = cli.covariance {
        config.run.covariance = match cov {
            CovarianceArg::Empirical => "empirical".into(),
            CovarianceArg::Fixed => "fixed".into(),
        };
    }
}

fn dispatch(cli: &Cli) -> CliResult<()> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    }
    let mut config = PipelineConfig::load(&cli.config)?;
    apply_overrides(&mut config, cli);
    match cli.command {
        Command::Run => commands::cmd_run(&config),
        Command::Sweep => commands::cmd_sweep(&config),
        Command::Bench => commands::cmd_bench(&config),
        Command::Validate => commands::cmd_validate(&config),
        Command::Fit => commands::cmd_fit(&config),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ CliError::Config(_)) => {
            eprintln!("{e}");
            ExitCode::from(1)
        }
        Err(e @ CliError::Numerical(_)) => {
            eprintln!("{e}");
            ExitCode::from(2)
        }
    }
}
