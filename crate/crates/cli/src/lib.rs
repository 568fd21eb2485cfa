//! Command-line orchestration of data generation, training, inference and
//! evaluation. Every command writes its resolved configuration next to its
//! outputs as `config.toml`.

pub mod commands;
pub mod config;

use clap::Parser;
use stiffssm_core::{Error, ErrorKind, Result};

pub use commands::Command;
pub use config::ExperimentConfig;

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "STIFFSSM_THREADS";

#[derive(Debug, Parser)]
#[command(name = "stiffssm", version, about = "Selective state-space surrogates for stiff chemical kinetics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Process exit code for a failure.
pub fn exit_code(err: &Error) -> u8 {
    match err.kind() {
        ErrorKind::Config => 2,
        ErrorKind::Numerical => 3,
        ErrorKind::Io => 4,
    }
}

/// Sizes the global worker pool from [`THREADS_ENV`], if set.
pub fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::invalid(THREADS_ENV, format!("expected a positive integer, got `{raw}`")))?;
    if rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
        log::warn!("worker pool already initialized; ignoring {THREADS_ENV}={n}");
    }
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    cli.command.run()
}
