//! Error type shared by every module in the crate.

use std::path::PathBuf;

/// Errors produced by file I/O, validation and decoding operations.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A file exists but its contents violate the expected format.
    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("invalid vocabulary: {0}")]
    Vocab(String),

    #[error("cannot tokenize {surface:?}: no vocabulary token matches at character {position}")]
    Tokenize { surface: String, position: usize },

    /// Constructor invariant violated on an in-memory value.
    #[error("invalid value: {0}")]
    Invalid(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("no feasible alignment: {0}")]
    Infeasible(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite value produced at layer {layer}")]
    NonFinite { layer: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
