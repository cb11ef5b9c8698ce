use std::io;

use rpel_core::RpelError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("invalid configuration: {0}")]
    Config(#[from] serde_json::Error),

    #[error(transparent)]
    Core(#[from] RpelError),

    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    /// Process exit status: 1 for I/O, 3 for numerical blow-up, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Csv(e) if e.is_io_error() => 1,
            CliError::Core(RpelError::NonFinite { .. }) => 3,
            _ => 2,
        }
    }
}
