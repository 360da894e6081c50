use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: failed to decode image: {message}")]
    Decode { path: PathBuf, message: String },

    #[error("{path}: unsupported PNG layout ({detail})")]
    UnsupportedFormat { path: PathBuf, detail: String },

    #[error("{path}: failed to encode image: {message}")]
    Encode { path: PathBuf, message: String },

    #[error("invalid raster: {0}")]
    InvalidRaster(String),

    #[error("dimension mismatch: {left_w}x{left_h} vs {right_w}x{right_h}")]
    DimensionMismatch {
        left_w: u32,
        left_h: u32,
        right_w: u32,
        right_h: u32,
    },

    #[error("invalid box {0}")]
    InvalidBox(String),

    #[error("manifest: {0}")]
    Manifest(String),

    #[error("invalid parameters: {0}")]
    Params(String),

    #[error("mask is not binary: found sample value {0}")]
    NonBinaryMask(u8),

    #[error("inpainting: {0}")]
    Inpaint(String),

    #[error("fit: {0}")]
    Fit(String),

    #[error("augmentation: {0}")]
    Augment(String),

    #[error("metrics: {0}")]
    Metrics(String),

    #[error("node protocol: {0}")]
    Protocol(String),

    #[error("node timed out after {0:?}")]
    NodeTimeout(std::time::Duration),

    #[error("node handle is poisoned by an earlier failure")]
    NodePoisoned,

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn dims(a: (u32, u32), b: (u32, u32)) -> Self {
        Error::DimensionMismatch {
            left_w: a.0,
            left_h: a.1,
            right_w: b.0,
            right_h: b.1,
        }
    }
}
