//! Library side of the `keyrate` command: configuration and batch execution.

pub mod config;
pub mod exec;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    /// Malformed input data, reported like a configuration problem.
    #[error("input data error: {0}")]
    Data(String),
    #[error("search failed: {0}")]
    Solve(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Data(_) => 2,
            CliError::Io(_) => 3,
            CliError::Solve(_) => 1,
        }
    }
}
