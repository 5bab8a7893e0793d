use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the acceleration library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("insufficient history: need at least {needed} columns, have {have}")]
    InsufficientHistory { needed: usize, have: usize },

    #[error("singular Gram matrix for weight {spec}")]
    SingularGram { spec: String },

    #[error("ill-conditioned solve for weight {spec} (condition estimate {condition:.1e})")]
    IllConditioned { spec: String, condition: f64 },

    #[error("degenerate normalization (1'M^-1 1 = 0) for weight {spec}")]
    DegenerateNormalization { spec: String },

    #[error("{method}: inner system of the factored preconditioner is singular")]
    FactoredPreconditioner { method: String },

    #[error("{kind} update undefined: inner matrix is singular")]
    UpdateUndefined { kind: String },

    #[error("{method} is not suitable for online acceleration")]
    UnsupportedOnline { method: String },

    #[error("dense computation limited to dimension {cap}, got {dim}")]
    DenseCap { dim: usize, cap: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
