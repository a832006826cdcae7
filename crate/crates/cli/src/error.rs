use std::process::ExitCode;

use netred::Error;
use thiserror::Error as ThisError;

/// Failures reported by the command line tool, each with its own exit code.
#[derive(Debug, ThisError)]
pub enum CliError {
    #[error("{0}")]
    Io(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("connectivity error: {0}")]
    Connectivity(String),
    #[error("solver error: {0}")]
    Solver(String),
    #[error("admissibility error: {0}")]
    Admissibility(String),
    #[error("configuration error: {0}")]
    Config(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Io(_) => 1,
            CliError::Parse(_) => 3,
            CliError::Connectivity(_) => 4,
            CliError::Solver(_) => 5,
            CliError::Admissibility(_) => 6,
            CliError::Config(_) => 7,
        })
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::InvalidNetwork(_) | Error::InvalidClustering(_) | Error::Dimension(_) => CliError::Parse(msg),
            Error::NotStronglyConnected | Error::QuotientNotStronglyConnected => CliError::Connectivity(msg),
            Error::Inadmissible(_) => CliError::Admissibility(msg),
            Error::NotHurwitz { .. } | Error::Numerical(_) | Error::Solver(_) => CliError::Solver(msg),
            Error::Config(_) => CliError::Config(msg),
        }
    }
}
