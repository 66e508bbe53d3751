use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the core library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed PGM header: {0}")]
    MalformedHeader(String),
    #[error("unsupported PGM maxval {0} (only 255 is accepted)")]
    MaxvalUnsupported(u32),
    #[error("truncated PGM data: expected {expected} samples, found {found}")]
    TruncatedData { expected: usize, found: usize },
    #[error("invalid image dimensions {width}x{height} for {len} samples")]
    BadDimensions { width: usize, height: usize, len: usize },
    #[error("kernel {kw}x{kh} does not fit image {width}x{height}")]
    KernelTooLarge { kw: usize, kh: usize, width: usize, height: usize },
    #[error("kernel dimensions must be odd, got {0}x{1}")]
    EvenKernel(usize, usize),
    #[error("crop target {tw}x{th} larger than source {width}x{height}")]
    CropTooLarge { tw: usize, th: usize, width: usize, height: usize },
    #[error("odd crop margin from {width}x{height} to {tw}x{th}")]
    OddMargin { tw: usize, th: usize, width: usize, height: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid structuring element: {0}")]
    InvalidSe(String),
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),
    #[error("invalid parameter file: {0}")]
    InvalidParams(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("non-finite loss at sample {sample}: P values {p_values:?}, min denominator {min_denominator:e}")]
    NonFiniteLoss {
        sample: u64,
        p_values: Vec<f64>,
        min_denominator: f64,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
