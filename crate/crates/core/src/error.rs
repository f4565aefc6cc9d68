use std::io;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum AsaError {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    #[error("format error: {0}")]
    Format(String),

    #[error("corrupt data: {0}")]
    Corruption(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("index {index} out of bounds for axis of length {len}")]
    OutOfBounds { index: usize, len: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("did not converge after {iterations} iterations (residual {residual:.3e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("target outside medium: {0}")]
    Domain(String),

    #[error("focus correction failed: {0}")]
    CorrectionFailure(String),

    #[error("sampling error: {0}")]
    Sampling(String),

    #[error("frequency error: {0}")]
    Frequency(String),

    #[error("record too short: {0}")]
    Resolution(String),

    #[error("metric undefined: {0}")]
    MetricUndefined(String),

    #[error("no peaks found in map")]
    NoPeaks,
}

pub type Result<T, E = AsaError> = std::result::Result<T, E>;
