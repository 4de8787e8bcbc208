//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("tensor-train rank mismatch: expected {expected:?}, got {got:?}")]
    RankMismatch { expected: Vec<usize>, got: Vec<usize> },

    #[error("dense state dimension {dim} exceeds limit {limit}")]
    DenseLimitExceeded { dim: usize, limit: usize },

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("{what} did not converge within {max_iter} iterations (residual {residual:.3e})")]
    Convergence { what: String, max_iter: usize, residual: f64 },

    #[error("time grid too short: need at least {need} points, got {got}")]
    GridTooShort { need: usize, got: usize },

    #[error("fingerprint mismatch: {0}")]
    FingerprintMismatch(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
