use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("gradient vanished at the current state")]
    ZeroGradient,
    #[error("matrix is not symmetric positive definite: {0}")]
    NotPositiveDefinite(String),
    #[error("no convergence after {iterations} iterations: {what}")]
    NoConvergence { what: String, iterations: usize },
    #[error("no sign change in bracket [{lo}, {hi}]: {what}")]
    NoSignChange { what: String, lo: f64, hi: f64 },
    #[error("ODE state left the admissible set at t={t}: {what}")]
    StateSpace { t: f64, what: String },
    #[error("rejection sampler exceeded {cap} attempts")]
    RejectionCap { cap: usize },
    #[error("unsupported operation: {0}")]
    Unsupported(String),
    #[error("insufficient data: {0}")]
    Insufficient(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
