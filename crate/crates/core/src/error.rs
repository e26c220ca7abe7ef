use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("matrix is not positive-definite{0}")]
    NotPositiveDefinite(&'static str),

    #[error("objective returned a non-finite value ({value}) at step {step}")]
    NonFinite { step: usize, value: f64 },

    #[error("bad magic number in {what}: expected {expected}, found {found}")]
    BadMagic {
        what: &'static str,
        expected: String,
        found: String,
    },

    #[error("unsupported {what} format version {found} (expected {expected})")]
    UnsupportedVersion {
        what: &'static str,
        expected: u32,
        found: u32,
    },

    #[error("truncated {what}: {detail}")]
    Truncated { what: &'static str, detail: String },

    #[error("inconsistent shapes in {what}: {detail}")]
    Shape { what: &'static str, detail: String },

    #[error("sample count mismatch: {images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: u64, msg: String },

    #[error("sample {index} has an all-zero feature vector and cannot be normalized")]
    ZeroColumn { index: usize },

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("class/label {class} has {available} samples, need more than {requested}")]
    InsufficientSamples {
        class: usize,
        available: usize,
        requested: usize,
    },

    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    /// True for errors caused by bad input files or arguments rather than
    /// a failed computation.
    pub fn is_input_error(&self) -> bool {
        !matches!(
            self,
            Error::NotPositiveDefinite(_) | Error::NonFinite { .. } | Error::NotSymmetric(_)
        )
    }
}
