use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by every module of the crate.
#[derive(Debug, Error)]
pub enum CssmError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("unsupported rate: cannot decimate {from} Hz to {to} Hz by an integer factor")]
    UnsupportedRate { from: f64, to: f64 },

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("gradient error in `{op}`: {message}")]
    Gradient { op: &'static str, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, CssmError>;

impl CssmError {
    pub fn config(msg: impl Into<String>) -> Self {
        CssmError::Config(msg.into())
    }

    pub fn dim(msg: impl Into<String>) -> Self {
        CssmError::Dimension(msg.into())
    }

    pub fn format(offset: u64, msg: impl Into<String>) -> Self {
        CssmError::Format {
            offset,
            message: msg.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CssmError::Io {
            path: path.into(),
            source,
        }
    }
}
