use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("quadrature did not converge (error estimate {estimate:e})")]
    Accuracy { estimate: f64 },

    #[error("decomposition failed: {0}")]
    Decomposition(String),

    #[error("covariance is not positive definite even with jitter {jitter:e}")]
    Factorization { jitter: f64 },

    #[error("hierarchy of {count} states exceeds the capacity of {limit}")]
    Capacity { count: u128, limit: usize },

    #[error("integration failed at step {step}: {reason}")]
    Integration { step: usize, reason: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True when the failure came from the filesystem rather than the inputs.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
