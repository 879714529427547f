use std::path::{Path, PathBuf};

use cssm_core::CssmError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] CssmError),

    #[error("invalid JSON in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{0}")]
    Usage(String),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Process exit status for a failed command.
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Core(CssmError::io(path, e))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(CssmError::Numerical(_) | CssmError::Gradient { .. }) => EXIT_NUMERICAL,
            _ => EXIT_CONFIG,
        }
    }
}
