use std::path::PathBuf;

use thiserror::Error;

use crate::polytope::BoundingBox;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("i/o error on {}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("LP solver failure: {0}")]
    Solver(String),

    #[error("polytope is unbounded")]
    Unbounded,

    /// The predicted work exceeds a configured cap; callers should switch method.
    #[error("estimated cost {estimate:.3e} exceeds cap {cap:.3e}; {hint}")]
    Cost {
        estimate: f64,
        cap: f64,
        hint: String,
    },

    /// A propagation step failed. `partial` holds the boxes of all completed steps.
    #[error("propagation step {step} failed")]
    Step {
        step: usize,
        partial: Vec<BoundingBox>,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    /// True for errors caused by a cost guard (including when wrapped in a step failure).
    pub fn is_cost_abort(&self) -> bool {
        match self {
            Error::Cost { .. } => true,
            Error::Step { source, .. } => source.is_cost_abort(),
            _ => false,
        }
    }
}
