use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    Dimension {
        context: String,
        expected: String,
        found: String,
    },

    #[error("{what} is not positive definite (eigenvalue {eigenvalue:e}, threshold {threshold:e})")]
    NotPositiveDefinite {
        what: String,
        eigenvalue: f64,
        threshold: f64,
    },

    #[error("{what} is singular or ill-conditioned (condition estimate {condition:e})")]
    Singular { what: String, condition: f64 },

    #[error("matrix is rank deficient: estimated rank {rank} of {cols} columns")]
    RankDeficient { rank: usize, cols: usize },

    #[error("symmetric eigendecomposition did not converge (residual {residual:e})")]
    NoConvergence { residual: f64 },

    #[error("non-finite value in {what} at index {index}")]
    NonFinite { what: String, index: usize },

    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("training diverged at step {step}: loss {loss:e} exceeds {limit:e}")]
    Divergence { step: usize, loss: f64, limit: f64 },

    #[error("system matrix singular at training step {step} ({variant})")]
    TrainingSingular { step: usize, variant: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{}: {reason}", path.display())]
    Wav { path: PathBuf, reason: String },

    #[error("malformed file: {0}")]
    Format(String),

    #[error("{}: {source}", path.display())]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dim(context: &str, expected: impl ToString, found: impl ToString) -> Self {
        Error::Dimension {
            context: context.to_string(),
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    /// True for errors caused by numerically degenerate inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite { .. }
                | Error::Singular { .. }
                | Error::RankDeficient { .. }
                | Error::NoConvergence { .. }
                | Error::Divergence { .. }
                | Error::TrainingSingular { .. }
        )
    }
}
