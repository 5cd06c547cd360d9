//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Caller handed us data or parameters that violate a precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// CSV parsing failure, pointing at the offending line (1-based).
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// A numeric operation produced a non-finite value or failed to converge.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// A per-factor intensity exceeded its precomputed bound. This invariant
    /// is guaranteed by the Taylor remainder construction, so a violation
    /// means the model's derivative bounds are wrong.
    #[error("factor {factor}: intensity {intensity} exceeds bound {bound}")]
    BoundViolation {
        factor: usize,
        intensity: f64,
        bound: f64,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
