//! Shared error and result types for the whole crate.

use std::path::PathBuf;

/// Errors produced by tensor operations, network construction, training,
/// data handling, and evaluation.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A tensor shape or dimension did not match what an operation requires.
    #[error("shape error: {0}")]
    Shape(String),

    /// A numeric-domain failure: non-finite values, invalid box geometry,
    /// or an operation that would produce undefined results.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// An invalid configuration (network topology, training hyperparameters,
    /// or generator parameters).
    #[error("config error: {0}")]
    Config(String),

    /// Malformed or inconsistent data (datasets, annotations, checkpoints,
    /// detection files).
    #[error("data error: {0}")]
    Data(String),

    /// An API was called in a way that cannot be satisfied (missing inputs,
    /// identifiers from a different container, empty sample sets).
    #[error("usage error: {0}")]
    Usage(String),

    /// Evaluation could not be carried out (no frames, no ground truths).
    #[error("evaluation error: {0}")]
    Eval(String),

    /// A persisted artifact declares a format version this build does not read.
    #[error("unsupported format version: found {found}, expected {expected}")]
    Version { found: String, expected: String },

    /// An I/O failure, annotated with the path that was being accessed.
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Wraps an I/O error with the path that produced it.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
