//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by estimator construction, streaming updates and I/O.
#[derive(Debug, Error)]
pub enum OgamError {
    /// Non-finite or out-of-domain numeric input.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Bandwidth outside (0, 1].
    #[error("invalid bandwidth: {0}")]
    InvalidBandwidth(f64),

    /// Unknown family name or a family the derivative stack cannot serve.
    #[error("unsupported family: {0}")]
    UnsupportedFamily(String),

    /// Grid/field shapes do not line up.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// Bad configuration value or unknown key.
    #[error("config error: {0}")]
    Config(String),

    /// Malformed input data row.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: u64, msg: String },

    /// Snapshot file cannot be decoded or has an incompatible version.
    #[error("snapshot error: {0}")]
    Snapshot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, OgamError>;
