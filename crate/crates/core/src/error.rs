use thiserror::Error;

/// Errors raised by the numeric routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("zero modulus at index {index}; the exact divergence is singular there, use the smoothed variant (epsilon > 0)")]
    Singular { index: usize },

    #[error("stability violated at iteration {iter}: negative divergence {value} must be positive")]
    Stability { iter: usize, value: f64 },

    #[error("iteration {iter} produced non-finite values")]
    NonFinite { iter: usize },

    #[error("eigensolver did not converge after {iters} iterations (relative residual {residual:e})")]
    Eigen { iters: usize, residual: f64 },

    #[error("no sign change for {what} on ({lo}, {hi})")]
    Bracket { what: &'static str, lo: f64, hi: f64 },

    #[error("state evolution did not settle at noise level {sigma_w2:e}")]
    SeNotConverged { sigma_w2: f64 },

    #[error("inconsistent prediction: {0}")]
    Inconsistent(String),

    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn param<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Parameter(msg.into()))
}
