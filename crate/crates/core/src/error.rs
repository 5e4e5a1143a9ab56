use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("usage: {0}")]
    Usage(String),

    #[error("bad magic number in {what}: expected {expected:#010x}, found {found:#010x}")]
    BadMagic {
        what: &'static str,
        expected: u32,
        found: u32,
    },

    #[error("truncated {what}: expected {expected} bytes, found {found}")]
    Truncated {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },

    #[error("format error: {0}")]
    Format(String),

    #[error("trainable parameter `{0}` has no gradient")]
    MissingGradient(String),

    #[error("non-finite value produced by `{0}`")]
    NonFinite(String),

    #[error(
        "gradient check failed: max relative error {max_rel_err:.3e} > {tolerance:.1e} ({what})"
    )]
    Gradcheck {
        what: String,
        max_rel_err: f64,
        tolerance: f64,
    },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Process exit code for the CLI: 1 usage, 2 data/format, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Config(_) => 1,
            Error::BadMagic { .. }
            | Error::Truncated { .. }
            | Error::CountMismatch { .. }
            | Error::Format(_)
            | Error::Io(_) => 2,
            Error::Shape(_)
            | Error::MissingGradient(_)
            | Error::NonFinite(_)
            | Error::Gradcheck { .. } => 3,
        }
    }
}
