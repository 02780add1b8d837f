use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised anywhere in the inspection toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("registration failed: {inliers} consensus inliers, {required} required")]
    RegistrationFailed { inliers: usize, required: usize },

    #[error("infeasible configuration: {0}")]
    Infeasible(String),

    #[error("parse error in `{field}`: {message}")]
    Parse { field: String, message: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {message}", path.display())]
    Codec { path: PathBuf, message: String },

    #[error("weights file: {0}")]
    Weights(String),

    #[error("parameter `{name}` shape mismatch: file has {found:?}, model expects {expected:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("missing template for class {class}: {detail}")]
    MissingTemplate { class: String, detail: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            field: field.into(),
            message: message.into(),
        }
    }
}
