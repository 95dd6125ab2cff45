use thiserror::Error;

/// Failures raised by map iteration and the analyses built on it.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum MapError {
    /// The orbit landed exactly on a discontinuity line while the policy was `Halt`.
    #[error("exact landing on the singular set at step {step} (angle {angle:e})")]
    SingularHit { step: u64, angle: f64 },
    /// The action or parameters fall outside the domain of the map.
    #[error("domain error: {0}")]
    Domain(String),
    /// A first return did not happen within the step budget.
    #[error("no return within the budget of {budget} steps")]
    BudgetExceeded { budget: u64 },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    /// A step-count prediction fell too far from an integer to be rounded.
    #[error("predicted value {value} is not within 1e-6 of an integer")]
    NonIntegerPrediction { value: f64 },
}

impl MapError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        MapError::Domain(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        MapError::InvalidParams(msg.into())
    }

    /// Rewrites the step index of a singular hit; other variants pass through.
    pub(crate) fn at_step(self, step: u64) -> Self {
        match self {
            MapError::SingularHit { angle, .. } => MapError::SingularHit { step, angle },
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, MapError>;
