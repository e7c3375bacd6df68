use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced anywhere in the toolkit.
///
/// Variants are grouped by what went wrong rather than by module, so the
/// command-line front end can map them onto exit codes with
/// [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: unsupported audio: {reason}")]
    UnsupportedAudio { path: PathBuf, reason: String },

    #[error("{path}: malformed audio: {reason}")]
    MalformedAudio { path: PathBuf, reason: String },

    #[error("{path}:{line}: {reason}")]
    Alignment {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("config: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("frame {index}: {source}")]
    Frame {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("taper {index}: {source}")]
    Taper {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
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

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    /// Process exit code: 2 config error, 3 data error, 4 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidArgument(_) => 2,
            Error::Numerical(_) => 4,
            Error::Frame { source, .. } | Error::Taper { source, .. } => source.exit_code(),
            _ => 3,
        }
    }
}
