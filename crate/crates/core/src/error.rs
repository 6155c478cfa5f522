use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite gradient in parameter `{0}`")]
    NonFiniteGradient(String),

    #[error("innovation covariance is not positive definite")]
    NotPositiveDefinite,

    #[error("frames out of order: got frame {got} after frame {last}")]
    OutOfOrderFrame { last: u32, got: u32 },

    #[error("infeasible scene: {0}")]
    InfeasibleScene(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("config: {0}")]
    Config(String),

    #[error("refusing to overwrite existing file {0} (use --force)")]
    WouldOverwrite(PathBuf),

    #[error("training data has no ground-truth labels")]
    MissingLabels,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
