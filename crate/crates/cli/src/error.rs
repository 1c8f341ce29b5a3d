use thg_core::ThgError;
use thiserror::Error;

use crate::checkpoint::CheckpointError;

/// Failure of a CLI command, carrying its process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("training diverged at step {step}")]
    Diverged { step: usize },
    #[error("{0}")]
    Checkpoint(#[from] CheckpointError),
    #[error("I/O error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("gradient check failed: {0}")]
    GradCheck(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Shape(_) => 1,
            Self::Diverged { .. } => 2,
            Self::Checkpoint(_) | Self::Io { .. } => 3,
            Self::GradCheck(_) => 4,
        }
    }

    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Self::Io { path: path.display().to_string(), source }
    }
}

impl From<ThgError> for CliError {
    fn from(e: ThgError) -> Self {
        match e {
            ThgError::Diverged { step } => Self::Diverged { step },
            ThgError::Shape(msg) => Self::Shape(msg),
            other => Self::Config(other.to_string()),
        }
    }
}
