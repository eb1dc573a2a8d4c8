use alloc::string::String;
use alloc::vec::Vec;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("kernel arity {arity} exceeds particle count {n}")]
    Arity { arity: usize, n: usize },

    #[error("non-finite kernel output for particle indices {indices:?}")]
    NonFiniteKernel { indices: Vec<usize> },

    #[error("non-finite state encountered; last valid time stamp {last_valid_time}")]
    NonFiniteState { last_valid_time: f64 },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("time {t} outside the available range [{start}, {end}]")]
    Range { t: f64, start: f64, end: f64 },

    #[error("unsupported kernel: {0}")]
    UnsupportedKernel(&'static str),

    #[error("fixed-point iteration did not converge after {iterations} iterations")]
    NotConverged { iterations: usize, residuals: Vec<f64> },

    #[error("capability error: {0}")]
    Capability(String),

    #[error("degenerate input: {0}")]
    Degenerate(&'static str),

    #[error("grid mismatch: {0}")]
    GridMismatch(&'static str),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn input<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Input(msg.into()))
}
