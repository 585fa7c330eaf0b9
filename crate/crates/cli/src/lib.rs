//! Scenario loading and the `consensus` subcommands.
//!
//! Exit codes: 0 success, 1 configuration error, 2 synthesis infeasible,
//! 3 simulation divergence.

pub mod commands;
pub mod scenario;

use adaptive_consensus::Error;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),

    #[error("{0}")]
    Synthesis(String),

    #[error("simulation diverged at t = {time}")]
    Divergence { time: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 1,
            CliError::Synthesis(_) => 2,
            CliError::Divergence { .. } => 3,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Synthesis(_) | Error::Numerical(_) => CliError::Synthesis(e.to_string()),
            Error::Divergence { time } => CliError::Divergence { time },
            Error::Io(io) => CliError::Io(io),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Config(e.to_string())
    }
}
