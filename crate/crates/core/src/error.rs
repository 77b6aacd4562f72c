use thiserror::Error;

/// Errors raised by the simulation and verification library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("index {index} out of range for {len} modes")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("quadrature grid of {nodes} nodes exceeds the configured bound of {bound}")]
    GridTooLarge { nodes: usize, bound: usize },

    #[error("assumption ({assumption}) violated: {reason}")]
    AssumptionViolation {
        assumption: &'static str,
        reason: String,
    },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("blow-up at step {step}: {reason}")]
    BlowUp { step: usize, reason: String },

    #[error("lineage mismatch: {0}")]
    LineageMismatch(String),

    #[error("trajectory unusable: {0}")]
    Trajectory(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
