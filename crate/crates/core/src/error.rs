use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("bad magic in {}: expected \"rvol/1\", found {found:?}", path.display())]
    BadMagic { path: PathBuf, found: String },

    #[error("raw data length mismatch in {}: expected {expected} bytes, found {actual}", path.display())]
    ByteLength {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },

    #[error("malformed header {}: {msg}", path.display())]
    BadHeader { path: PathBuf, msg: String },

    #[error("dtype mismatch: expected {expected}, found {found}")]
    DtypeMismatch {
        expected: &'static str,
        found: String,
    },

    #[error("mask voxel {index} has value {value}, expected 0 or 1")]
    InvalidMaskValue { index: usize, value: u8 },

    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("region out of bounds: {0}")]
    OutOfBounds(String),

    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("shape mismatch: {0:?} vs {1:?}")]
    ShapeMismatch([usize; 3], [usize; 3]),

    #[error("mask is empty")]
    EmptyMask,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("segmenter protocol violation: {0}")]
    Protocol(String),

    #[error("segmenter reported an error: {0}")]
    Backend(String),

    #[error("malformed handshake: {0}")]
    MalformedHandshake(String),

    #[error("timed out after {0:?} waiting for segmenter handshake")]
    HandshakeTimeout(std::time::Duration),

    #[error("failed to spawn segmenter {command:?}: {source}")]
    Spawn {
        command: String,
        #[source]
        source: std::io::Error,
    },

    #[error("nodule escapes volume bounds: {0}")]
    NoduleOutOfBounds(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
