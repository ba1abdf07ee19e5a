use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An operation received inputs whose extents do not line up.
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("non-finite value in input of {op}")]
    NonFinite { op: &'static str },

    /// A documented precondition of an operation does not hold.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("malformed file at byte offset {offset}: {reason}")]
    MalformedFile { offset: usize, reason: String },

    #[error("line {line}: {reason}")]
    CorruptRecord { line: usize, reason: String },

    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Schema(Vec<String>),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
