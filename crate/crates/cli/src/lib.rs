//! Experiment harness for tempered optimal transport: parameter sweeps written as CSV/JSON.

pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;

pub use config::{Command, ConfigOverrides, ExperimentConfig};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "TEMPERED_OT_THREADS";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("bad configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] tempered_ot::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(tempered_ot::Error::InfeasibleSupport { .. }) => 2,
            CliError::Core(tempered_ot::Error::NonConvergence { .. }) => 1,
            _ => 3,
        }
    }
}

/// Per-run tallies over all (grid point, trial) cells.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunStatus {
    pub cells: usize,
    pub nonconverged: usize,
    pub infeasible: usize,
}

impl RunStatus {
    /// 0 success, 1 some cell did not converge, 2 some cell was infeasible.
    pub fn exit_code(&self) -> i32 {
        if self.infeasible > 0 {
            2
        } else if self.nonconverged > 0 {
            1
        } else {
            0
        }
    }
}

/// Worker pool honoring `TEMPERED_OT_THREADS` (all cores when unset).
pub fn thread_pool() -> Result<rayon::ThreadPool, CliError> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n >= 1)
            .ok_or_else(|| CliError::Config(format!("{THREADS_ENV}={v:?} is not a positive integer")))?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))
}

/// Runs the configured command inside `pool`.
pub fn run(cfg: &ExperimentConfig, pool: &rayon::ThreadPool) -> Result<RunStatus, CliError> {
    pool.install(|| commands::run(cfg))
}
