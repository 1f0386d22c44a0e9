use thiserror::Error;

#[derive(Debug, Error)]
pub enum OtError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("insufficient data: need at least {needed} points, found {found}")]
    InsufficientData { needed: usize, found: usize },

    #[error("numerical failure: {0}")]
    NonFinite(String),

    #[error("source atom {0} carries no mass in the plan")]
    ZeroMassRow(usize),

    #[error("no convergence after {iterations} iterations (marginal residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl OtError {
    /// Whether the failure stems from the numerics rather than from the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, OtError::NonFinite(_) | OtError::NotConverged { .. })
    }
}

pub type Result<T> = std::result::Result<T, OtError>;
