use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty prompt: {0}")]
    EmptyPrompt(String),

    #[error("non-finite value produced by `{op}`")]
    NonFinite { op: String },

    #[error("training diverged at step {step} (lr {lr}): non-finite value in `{tensor}`")]
    Diverged { step: u64, lr: f64, tensor: String },

    #[error(transparent)]
    Load(#[from] LoadError),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("checkpoint is incompatible with the model: tensor `{tensor}`: {reason}")]
    Incompatible { tensor: String, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Image and mask loading failures. Each failure mode is a distinct variant.
#[derive(Debug, Error)]
pub enum LoadError {
    #[error("file not found: {0}")]
    Missing(PathBuf),

    #[error("malformed header in {path}: {reason}")]
    MalformedHeader { path: PathBuf, reason: String },

    #[error("image {0} has zero width or height")]
    ZeroSize(PathBuf),

    #[error("unsupported image format: {0}")]
    Unsupported(PathBuf),

    #[error("truncated pixel data in {0}")]
    Truncated(PathBuf),

    #[error("could not decode {path}: {reason}")]
    Decode { path: PathBuf, reason: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

macro_rules! dim_err {
    ($($arg:tt)*) => {
        $crate::error::Error::Dimension(format!($($arg)*))
    };
}
pub(crate) use dim_err;
