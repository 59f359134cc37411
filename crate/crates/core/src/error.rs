use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid tensor shape {shape:?}: {reason}")]
    InvalidShape { shape: Vec<usize>, reason: String },

    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch { left: Vec<usize>, right: Vec<usize> },

    #[error("insufficient layers for variance (got {0}, need at least 2)")]
    InsufficientLayers(usize),

    #[error("no positive queries")]
    NoPositiveQueries,

    #[error("uncertainty must be non-negative")]
    NegativeUncertainty,

    #[error("length mismatch: {what} ({left} vs {right})")]
    LengthMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },

    #[error("iou threshold must lie in (0, 1], got {0}")]
    InvalidThreshold(f64),

    #[error("no samples")]
    NoSamples,

    #[error("no detections above floor")]
    NoDetectionsAboveFloor,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("training diverged; reduce step size (epoch {epoch}, loss {loss})")]
    Diverged { epoch: usize, loss: f64 },

    #[error("{path}: {message}")]
    Parse { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
