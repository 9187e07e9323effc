use thiserror::Error;

/// Errors raised by oracles, optimizers and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    /// The objective (or an intermediate finite-difference evaluation) was not finite.
    #[error("non-finite objective value at a point of dimension {}", point.len())]
    NumericalOverflow { point: Vec<f64> },

    /// The problem does not expose a capability the caller needs.
    #[error("problem does not provide {0}")]
    CapabilityMissing(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// An internal precondition was violated by the caller.
    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("numerical error: {0}")]
    NumericalError(String),

    #[error("line search exhausted after {ls_count} trial steps")]
    LineSearchExhausted { ls_count: usize },

    /// The (approximate) subspace slope was not negative.
    #[error("direction is not a descent direction (slope {slope})")]
    NonDescent { slope: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn overflow(point: &nalgebra::DVector<f64>) -> Self {
        Error::NumericalOverflow {
            point: point.iter().copied().collect(),
        }
    }

    /// Whether the optimizer loop can recover from this error by resampling.
    pub fn is_recoverable(&self) -> bool {
        matches!(
            self,
            Error::LineSearchExhausted { .. } | Error::NonDescent { .. }
        )
    }
}
