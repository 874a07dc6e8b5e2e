//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced when building problems or running the pipeline.
#[derive(Debug, Error)]
pub enum NeoError {
    /// Inputs have inconsistent shapes.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A scalar parameter is outside its admissible range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Input data fails a structural requirement (asymmetry, non-finite entries, ...).
    #[error("invalid data: {0}")]
    InvalidData(String),

    /// A discrete clustering violates the assignment-budget constraints.
    #[error("constraint violation: {0}")]
    ConstraintViolation(String),

    /// The graph has no usable nodes.
    #[error("empty graph: {0}")]
    EmptyGraph(String),

    /// File could not be read.
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// File contents could not be parsed.
    #[error("parse error in {path} at line {line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, NeoError>;
