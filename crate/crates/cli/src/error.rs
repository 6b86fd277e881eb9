use std::process::ExitCode;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Io(String),
    /// A verification check failed; the report has been written.
    #[error("{0}")]
    CheckFailed(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Validation(_) | CliError::CheckFailed(_) => ExitCode::from(1),
            CliError::Io(_) => ExitCode::from(2),
        }
    }
}

impl From<markov_order::Error> for CliError {
    fn from(e: markov_order::Error) -> Self {
        match e {
            markov_order::Error::Io(msg) => CliError::Io(msg),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
