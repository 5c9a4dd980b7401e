use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the library reports. The CLI maps variants onto exit-code classes
/// through [`Error::class`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected:?}, got {actual:?}")]
    Shape {
        context: &'static str,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("corrupt file {path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },

    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
}

/// Coarse failure classes, stable across error variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Io,
    Integrity,
    Numeric,
}

impl Error {
    pub fn shape(context: &'static str, expected: &[usize], actual: &[usize]) -> Self {
        Error::Shape {
            context,
            expected: expected.to_vec(),
            actual: actual.to_vec(),
        }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn corrupt(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Corrupt {
            path: path.into(),
            reason: reason.into(),
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidInput(_) => ErrorClass::Usage,
            Error::Io { .. } => ErrorClass::Io,
            Error::Integrity(_) | Error::Corrupt { .. } | Error::Version { .. } => {
                ErrorClass::Integrity
            }
            Error::Shape { .. } => ErrorClass::Integrity,
            Error::NonFinite(_) => ErrorClass::Numeric,
        }
    }
}
