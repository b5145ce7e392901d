//! Batch experiment runner: configuration, dispatch and report persistence.

// Negated float comparisons deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;

use thiserror::Error;

pub use config::{Cli, Command, ExperimentConfig, Resolved};
pub use output::{Outcome, Table};

/// Seed used when neither the command line nor the config file supplies one.
pub const DEFAULT_SEED: u64 = 1;
/// Output directory used when none is given.
pub const DEFAULT_OUT: &str = "billiard-lens-out";
/// Environment fallback for the worker count.
pub const THREADS_ENV: &str = "BILLIARD_LENS_THREADS";

/// Exit status for a completed run.
pub const EXIT_OK: i32 = 0;
/// Exit status for invalid configuration or input.
pub const EXIT_VALIDATION: i32 = 2;
/// Exit status for a violated numerical contract.
pub const EXIT_NUMERIC: i32 = 3;

/// Failures of the runner.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },

    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },

    #[error(transparent)]
    Library(#[from] billiard_lens::Error),
}

impl CliError {
    /// Stable machine-readable reason string.
    pub fn reason(&self) -> &'static str {
        match self {
            CliError::Config(_) => "invalid-config",
            CliError::Read { .. } => "read-failure",
            CliError::Write { .. } => "write-failure",
            CliError::Library(e) => e.reason(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Library(e) if e.is_numeric() => EXIT_NUMERIC,
            _ => EXIT_VALIDATION,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

pub(crate) fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// Runs a resolved configuration on its own worker pool.
pub fn execute(run: &Resolved) -> Result<Outcome> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(run.threads)
        .build()
        .map_err(|e| invalid(format!("cannot start {} workers: {e}", run.threads)))?;
    pool.install(|| commands::dispatch(&run.command, run.seed))
}

/// Runs a resolved configuration and writes its report and tables to the output directory.
pub fn execute_and_write(run: &Resolved) -> Result<Outcome> {
    let outcome = execute(run)?;
    outcome.write(&run.out, run.command.name(), run.seed)?;
    Ok(outcome)
}
