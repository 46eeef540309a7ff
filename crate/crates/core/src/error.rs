use std::path::PathBuf;

/// Errors produced anywhere in the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Two parameter collections (or a tensor and an update) do not line up.
    #[error("shape mismatch on tensor `{tensor}`: {reason}")]
    Shape { tensor: String, reason: String },

    #[error("index out of bounds: {0}")]
    OutOfBounds(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    /// A numeric argument is outside the domain of a formula.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("empty input: {0}")]
    Empty(String),

    /// A wire message could not be decoded.
    #[error("corrupt message at byte {offset}: {reason}")]
    Corrupt { offset: usize, reason: String },

    #[error("malformed IDX data at byte {offset}: {reason}")]
    Idx { offset: usize, reason: String },

    #[error("round aborted by client {client}: {source}")]
    Client {
        client: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn shape(tensor: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Shape {
            tensor: tensor.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn corrupt(offset: usize, reason: impl Into<String>) -> Self {
        Error::Corrupt {
            offset,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
