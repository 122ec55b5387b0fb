//! Experiment runner around the core library: configuration documents,
//! preset experiments, artifact emission, and the verification suite.

use thiserror::Error;

pub mod accept;
pub mod config;
pub mod experiment;
pub mod report;

/// Exit codes: 2 config, 3 numerical, 4 acceptance failure.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("verification failed: {0}")]
    AcceptanceFailed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::AcceptanceFailed(_) => 4,
        }
    }
}
