use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A numeric argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("unsupported camera model: {0}")]
    UnsupportedModel(String),

    #[error("point is behind the camera (z = {0})")]
    BehindCamera(f64),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Input data violates a documented precondition (ordering, uniqueness, ...).
    #[error("validation error: {0}")]
    Validation(String),

    #[error("contrastive loss needs at least 2 rows per batch, got {0}")]
    InsufficientNegatives(usize),

    #[error("training diverged at step {step}: loss = {loss}")]
    Diverged { step: usize, loss: f64 },

    #[error("recall is undefined: no query has a non-empty positive set")]
    UndefinedRecall,

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("malformed {kind} file {path}: {reason}")]
    Format {
        kind: &'static str,
        path: PathBuf,
        reason: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image codec error on {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("json error in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(kind: &'static str, path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            kind,
            path: path.into(),
            reason: reason.into(),
        }
    }

    /// True for errors caused by bad inputs rather than by the environment.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Domain(_)
                | Error::UnsupportedModel(_)
                | Error::Dimension(_)
                | Error::Validation(_)
                | Error::Format { .. }
                | Error::Json { .. }
                | Error::Protocol(_)
        )
    }
}
