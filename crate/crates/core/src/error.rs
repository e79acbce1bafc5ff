use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("message of {len} bits does not fit a {rows}x{cols} grid")]
    MessageTooLong { len: usize, rows: usize, cols: usize },

    #[error("synchronization failed: {0}")]
    SyncFailed(String),

    #[error("degenerate quad: corners are collinear")]
    DegenerateQuad,

    #[error("need at least {needed} samples, got {got}")]
    NotEnoughSamples { needed: usize, got: usize },

    #[error("bad attack spec '{spec}': {reason}")]
    BadAttackSpec { spec: String, reason: String },

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
