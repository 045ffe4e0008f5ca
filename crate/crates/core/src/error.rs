use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("image is {width}x{height}, both dimensions must be at least {min}")]
    TooSmall { width: usize, height: usize, min: usize },

    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch { expected: (usize, usize), actual: (usize, usize) },

    #[error("at least one image is required")]
    TooFewImages,

    #[error("FFT size {fft_size} cannot hold a {width}x{height} image (must be a power of two >= both dimensions)")]
    SizeTooSmall { fft_size: usize, width: usize, height: usize },

    #[error("degenerate input: {0}")]
    DegenerateInput(&'static str),

    #[error("crop of {delta_rho} rows does not fit a grid of {n_rho} rows")]
    BadCrop { delta_rho: usize, n_rho: usize },

    #[error("empty result list")]
    EmptyList,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{path}: {source}")]
    Io { path: PathBuf, #[source] source: std::io::Error },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
