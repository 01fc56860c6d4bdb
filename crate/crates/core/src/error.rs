use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid shape: {0}")]
    InvalidShape(String),

    #[error("voxel {coord:?} is outside grid {dims:?}")]
    OutOfBounds { coord: Vec<usize>, dims: Vec<usize> },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("no sources")]
    NoSources,

    #[error("non-finite intensity at voxel {0}")]
    NonFiniteIntensity(usize),

    #[error("degenerate intensity range")]
    DegenerateRange,

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("npy parse error at byte {offset}: {message}")]
    NpyParse { offset: usize, message: String },

    #[error("sidecar error: {0}")]
    Sidecar(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] io::Error),
}
