use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("inconsistent data: {0}")]
    Consistency(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("degenerate quantization scale: {0}")]
    DegenerateScale(String),

    #[error("training failed: {0}")]
    Training(String),

    #[error("missing entry: {0}")]
    Lookup(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether the error comes from bad input data or files rather than from
    /// how the tool was invoked.
    pub fn is_data_error(&self) -> bool {
        matches!(self, Error::Io { .. } | Error::Format(_) | Error::Consistency(_))
    }
}
