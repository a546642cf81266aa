//! Error types shared across the engine.

use std::path::PathBuf;

use thiserror::Error;

/// Result alias used throughout the engine.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A generation backend failed (after its own retries, if any).
    #[error("backend error at stage `{stage}`: {message}")]
    Backend { stage: String, message: String },

    /// The scripted backend has no response left for a stage.
    #[error("script exhausted for stage `{stage}`: {reason}")]
    ScriptExhausted { stage: String, reason: String },

    /// HTTP transport failure after retries.
    #[error("transport error: {0}")]
    Transport(String),

    #[error("embedding failed: {0}")]
    Embed(String),

    #[error("beam search produced no candidates at depth {depth}")]
    EmptySearch { depth: usize },

    #[error("could not classify task description: {0}")]
    Classification(String),

    #[error("session `{0}` is closed")]
    SessionClosed(String),

    #[error("patient `{0}` has no records")]
    NoRecords(String),

    #[error("unknown patient `{0}`")]
    UnknownPatient(String),

    #[error("unknown session `{0}`")]
    UnknownSession(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Malformed corpus, script, fixture or session document.
    #[error("{}:{line}: {message}", file.display())]
    Format {
        file: PathBuf,
        line: usize,
        message: String,
    },

    #[error("feedback targets missing section `{0}`")]
    InvalidTarget(String),

    #[error("malformed feedback: {0}")]
    InvalidFeedback(String),

    #[error("illegal transition: {0}")]
    IllegalTransition(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Coarse error classes, used by the service to pick status codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    NotFound,
    Conflict,
    Unprocessable,
    Internal,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::UnknownPatient(_) | Error::UnknownSession(_) => ErrorClass::NotFound,
            Error::IllegalTransition(_) | Error::SessionClosed(_) => ErrorClass::Conflict,
            Error::InvalidFeedback(_) | Error::InvalidTarget(_) | Error::InvalidArgument(_) => {
                ErrorClass::Unprocessable
            }
            _ => ErrorClass::Internal,
        }
    }

    pub(crate) fn backend(stage: &str, message: impl Into<String>) -> Self {
        Error::Backend {
            stage: stage.to_string(),
            message: message.into(),
        }
    }

    pub(crate) fn format(file: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Format {
            file: file.into(),
            line,
            message: message.into(),
        }
    }
}
