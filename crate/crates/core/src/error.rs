use alloc::boxed::Box;
use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("model `{model}` does not support {operation}")]
    UnsupportedModel {
        model: &'static str,
        operation: &'static str,
    },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("gamma statistics are empty")]
    EmptyStatistics,

    #[error("non-finite value produced at step {step}")]
    Diverged { step: usize },

    #[error("matrix is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("Fisher matrix is singular (smallest eigenvalue {min_eigenvalue:e})")]
    SingularFisher { min_eigenvalue: f64 },

    #[error("contraction violated: gamma * lambda_max = {0}")]
    ContractionViolation(f64),

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("at step {step}: {source}")]
    AtStep { step: usize, source: Box<Error> },
}

impl Error {
    pub(crate) fn at_step(self, step: usize) -> Self {
        match self {
            Error::Diverged { .. } | Error::AtStep { .. } => self,
            other => Error::AtStep {
                step,
                source: Box::new(other),
            },
        }
    }

    /// Step index carried by a run-level error, if any.
    pub fn step(&self) -> Option<usize> {
        match self {
            Error::Diverged { step } | Error::AtStep { step, .. } => Some(*step),
            _ => None,
        }
    }
}
