//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Caller supplied something malformed (bad arity, misaligned lengths,
    /// out-of-range parameter). Maps to CLI exit code 2.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A file could not be parsed. `location` is "row:col" for tabular data
    /// or "line:column" for JSON.
    #[error("format error at {location}: {message}")]
    Format { location: String, message: String },

    /// A group/partition selected no rows.
    #[error("empty group: {0}")]
    EmptyGroup(String),

    /// Training produced a non-finite loss.
    #[error("training diverged at epoch {epoch}: {message}")]
    Training { epoch: usize, message: String },

    /// The requested baseline cannot be built from the given predictor kind.
    #[error("unsupported baseline: {0}")]
    UnsupportedBaseline(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn format(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format {
            location: location.into(),
            message: message.into(),
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format {
            location: format!("{}:{}", e.line(), e.column()),
            message: e.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
