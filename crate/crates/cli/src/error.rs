use std::path::Path;

use thiserror::Error;

/// A failed command, split by who has to fix it.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, config or paths. Exit status 1.
    #[error("{0}")]
    Validation(String),
    /// Input data that cannot be used as given. Exit status 2.
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Data(_) => 2,
        }
    }

    pub fn data(context: impl std::fmt::Display, err: impl std::fmt::Display) -> Self {
        CliError::Data(format!("{context}: {err}"))
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        CliError::Data(format!("{}: {err}", path.display()))
    }
}

pub type CliResult<T> = Result<T, CliError>;
