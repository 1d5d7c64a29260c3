//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: dimension mismatch: expected {expected}, found {found}")]
    DimMismatch {
        op: &'static str,
        expected: String,
        found: String,
    },

    #[error("{op}: produced a non-finite value")]
    NonFinite { op: &'static str },

    #[error("{op}: did not converge after {budget} sweeps (off-diagonal {off:.3e})")]
    NoConvergence {
        op: &'static str,
        budget: usize,
        off: f64,
    },

    #[error("{op}: {msg}")]
    InvalidArg { op: &'static str, msg: String },

    #[error("bad magic in {path}: expected {expected}, found {found}")]
    BadMagic {
        path: String,
        expected: u32,
        found: u32,
    },

    #[error("truncated file {path}: needed {needed} bytes, found {found}")]
    Truncated {
        path: String,
        needed: usize,
        found: usize,
    },

    #[error("image/label count mismatch: {images} images vs {labels} labels")]
    CountMismatch { images: usize, labels: usize },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(op: &'static str, msg: impl Into<String>) -> Self {
        Error::InvalidArg {
            op,
            msg: msg.into(),
        }
    }

    pub fn dims(op: &'static str, expected: impl Into<String>, found: impl Into<String>) -> Self {
        Error::DimMismatch {
            op,
            expected: expected.into(),
            found: found.into(),
        }
    }
}
