use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration or argument violates an operation's preconditions.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// Input data is unusable (too short, silent, non-finite, ...).
    #[error("invalid data: {0}")]
    Data(String),

    /// A serialized artifact (weight file, dataset shard) is malformed.
    #[error("format error{}: {message}", tensor.as_ref().map(|t| format!(" in tensor `{t}`")).unwrap_or_default())]
    Format {
        message: String,
        tensor: Option<String>,
    },

    /// Numerical failure such as a NaN gradient.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("WAV error on {}: {source}", path.display())]
    Wav {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format {
            message: msg.into(),
            tensor: None,
        }
    }

    pub(crate) fn format_in(tensor: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Format {
            message: msg.into(),
            tensor: Some(tensor.into()),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad caller input rather than internal failure.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Error::Numerical(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
