use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("trace does not belong to this network: {0}")]
    TraceMismatch(String),

    #[error("missing reference trace for {0} rule")]
    MissingReference(&'static str),

    #[error("unknown tap `{name}`; available taps: {available}")]
    UnknownTap { name: String, available: String },

    #[error("verification failed: {0}")]
    Verification(String),

    #[error("data generation failed: {0}")]
    Generation(String),

    #[error("attribution failed: {0}")]
    Attribution(String),

    #[error("{path}: {message}")]
    Load { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn load(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Load {
            path: path.into(),
            message: message.to_string(),
        }
    }
}
