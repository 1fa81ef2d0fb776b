use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("riccati iteration did not converge after {iterations} iterations (residual {residual:e})")]
    RiccatiDiverged { iterations: usize, residual: f64 },

    #[error("singular innovation covariance")]
    SingularInnovation,

    #[error("could not generate a usable plant after {0} attempts")]
    PlantGeneration(usize),

    #[error("action space too large: {size} actions exceeds limit {limit}")]
    ActionSpaceTooLarge { size: u128, limit: u128 },

    /// `episode` is 0 outside a training loop.
    #[error("training diverged at episode {episode}: {reason}")]
    Diverged { episode: usize, reason: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
