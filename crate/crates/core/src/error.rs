use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("expected a {expected}-channel image, got {actual} channels")]
    ChannelMismatch { expected: usize, actual: usize },

    #[error("dimension mismatch: {left:?} vs {right:?}")]
    DimensionMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(&'static str),

    #[error("non-finite {what} at step {step}")]
    NonFinite { what: String, step: usize },

    #[error("model not trained: {0}")]
    Untrained(&'static str),

    #[error("spec hash mismatch: file has {found}, network expects {expected}")]
    SpecHashMismatch { expected: String, found: String },

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for errors caused by bad input data rather than numerics or usage.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::DimensionMismatch { .. }
                | Error::ChannelMismatch { .. }
                | Error::UndefinedMetric(_)
                | Error::SpecHashMismatch { .. }
                | Error::Format { .. }
                | Error::Io(_)
                | Error::Image(_)
                | Error::Json(_)
                | Error::Untrained(_)
        )
    }
}
