use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ThgError {
    /// Input outside the domain of a map (non-finite, outside the ball, arctanh singularity).
    #[error("domain error: {0}")]
    Domain(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    /// A caller-side precondition does not hold.
    #[error("contract violation: {0}")]
    Contract(String),
    /// Möbius addition denominator collapsed (antipodal points near the shell).
    #[error("numerical degeneracy: {0}")]
    Degenerate(String),
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
    #[error("training diverged at step {step}")]
    Diverged { step: usize },
}

pub type Result<T> = std::result::Result<T, ThgError>;
