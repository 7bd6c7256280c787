//! Crate-wide error type and the exit-code mapping used by the CLI.

use std::path::PathBuf;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid configuration (bad JSON, unknown keys, out-of-range values).
    #[error("config error: {0}")]
    Config(String),

    /// Problems with corpus data, audio files, or feature caches.
    #[error("data error: {0}")]
    Data(String),

    /// Parse failure in a text input, with file and line for diagnostics.
    #[error("parse error: {path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    /// Shape or length mismatch between arrays that must be frame-aligned.
    #[error("shape error: {0}")]
    Shape(String),

    /// A loss became non-finite during training.
    #[error("training diverged at step {step}: {term} is not finite")]
    Divergence { step: u64, term: String },

    #[error("io error: {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for this error: 2 config, 4 divergence, 3 anything
    /// touching data or I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Divergence { .. } => 4,
            _ => 3,
        }
    }
}
