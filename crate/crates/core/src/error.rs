use thiserror::Error;

/// Errors raised across the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("time {0} lies outside the open interval (0, pi)")]
    Domain(f64),

    #[error("Gauss-Hermite order {0} is not supported (1..={max})", max = crate::filters::MAX_GH_ORDER)]
    UnsupportedOrder(usize),

    #[error("unsupported input: {0}")]
    UnsupportedInput(String),

    #[error("numerical failure at step {step}: {reason}")]
    NumericalFailure { step: usize, reason: String },

    #[error("precondition violated: {0}")]
    PreconditionViolated(String),

    #[error("fit failed: all {n_starts} starts failed ({diagnostics})")]
    FitFailed { n_starts: usize, diagnostics: String },
}

impl Error {
    /// Re-tags a numerical failure with the step index it occurred at.
    pub fn at_step(self, step: usize) -> Self {
        match self {
            Error::NumericalFailure { reason, .. } => Error::NumericalFailure { step, reason },
            other => other,
        }
    }

    pub(crate) fn numerical(reason: impl Into<String>) -> Self {
        Error::NumericalFailure {
            step: 0,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
