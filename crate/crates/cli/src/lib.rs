//! Scenario runner for the Söze fluid simulator: scenario files, the
//! `run`, `sweep` and `oracle` commands, and their output formats.

pub mod builtin;
pub mod commands;
pub mod output;
pub mod scenario;

use soze_core::metrics::MetricsError;
use soze_core::SimError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad scenario, override or parameter; exit status 2.
    #[error("{0}")]
    Config(String),
    /// `require_converged` was set and some epoch did not converge; exit status 3.
    #[error("{0}")]
    NotConverged(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::NotConverged(_) => 3,
            CliError::Io(_) | CliError::Csv(_) | CliError::Json(_) => 1,
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        CliError::Config(format!("metrics: {e}"))
    }
}
