use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid architecture: {0}")]
    Arch(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite activation in {layer}")]
    Forward { layer: String },

    #[error("training diverged at epoch {epoch}")]
    Divergence { epoch: usize, last_good: Box<crate::arch::ModelParams> },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Core(#[from] nmqd_core::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn is_io(&self) -> bool {
        match self {
            Error::Io(_) => true,
            Error::Core(e) => e.is_io(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
