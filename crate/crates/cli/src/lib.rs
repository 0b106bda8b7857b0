//! Configuration, data ingestion and the commands behind the `fpmdi` binary.

pub mod commands;
pub mod config;
pub mod io;

use fpmdi_core::Error as CoreError;

/// Failure classes of the command-line tool, each with its own exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::InvalidParams(_) => CliError::Config(e.to_string()),
            CoreError::Record(_) | CoreError::InsufficientStatistics(_) => CliError::Data(e.to_string()),
            CoreError::Domain { .. } | CoreError::Degenerate(_) | CoreError::NoConvergence(_) => {
                CliError::Numerical(e.to_string())
            }
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
