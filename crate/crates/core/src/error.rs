//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("rejection sampling budget of {budget} draws exhausted; the intersection may have negligible volume")]
    RejectionBudget { budget: u64 },

    #[error("point lies outside the body")]
    PointOutsideBody,

    #[error("invalid parameter `{name}`: {why}")]
    InvalidParameter { name: &'static str, why: String },

    #[error("infeasible schedule: {0}")]
    InfeasibleSchedule(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("gradient step blew up: |eta * g| = {norm:.3e} exceeds {limit:.3e}; the oracle or step size is degenerate")]
    StepBlowUp { norm: f64, limit: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(name: &'static str, why: impl Into<String>) -> Self {
        Error::InvalidParameter { name, why: why.into() }
    }

    /// Process exit code used by the command-line interface.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InfeasibleSchedule(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
