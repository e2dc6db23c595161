//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A value violated a type or argument invariant.
    #[error("validation: {0}")]
    Validation(String),

    /// A state or action index was out of range.
    #[error("index out of range: {0}")]
    Index(String),

    /// An operation was called in a state that cannot serve it
    /// (sampling an empty buffer, stepping a finished episode, ...).
    #[error("invalid state: {0}")]
    State(String),

    /// An iterative solver hit its iteration cap before reaching tolerance.
    #[error("no convergence: {0}")]
    Convergence(String),

    /// Not enough history to compute a feature or start an episode.
    #[error("insufficient history: {0}")]
    Warmup(String),

    /// Malformed input data (config file, CSV, JSON fixture).
    #[error("parse: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn index(msg: impl Into<String>) -> Self {
        Error::Index(msg.into())
    }

    pub fn state(msg: impl Into<String>) -> Self {
        Error::State(msg.into())
    }

    pub fn warmup(msg: impl Into<String>) -> Self {
        Error::Warmup(msg.into())
    }

    pub fn parse(msg: impl Into<String>) -> Self {
        Error::Parse(msg.into())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
