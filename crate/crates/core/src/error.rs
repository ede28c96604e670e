use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("mesh error: {0}")]
    Mesh(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("linear solver did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("linear solver breakdown: {0}")]
    Breakdown(String),

    #[error("solve failed at step {step}: {source}")]
    StepSolve {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("non-finite state after step {step}")]
    NumericalBlowup { step: usize },

    #[error("experiment failed: {0}")]
    Experiment(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for failures that come from the numerics of a single path
    /// (solver failure or blow-up) rather than from bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NoConvergence { .. }
            | Error::Breakdown(_)
            | Error::NumericalBlowup { .. }
            | Error::StepSolve { .. } => true,
            _ => false,
        }
    }
}
