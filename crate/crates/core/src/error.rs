use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum DolceError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid propensity {value} for sample {index}")]
    InvalidPropensity { index: usize, value: f64 },

    #[error("unsupported policy: {0}")]
    UnsupportedPolicy(String),

    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("no convergence after {iterations} iterations (gradient norm {grad_norm:.3e})")]
    Convergence { iterations: usize, grad_norm: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, DolceError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(DolceError::InvalidInput(msg.into()))
}
