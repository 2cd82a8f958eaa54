use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: malformed record: {message}")]
    Parse { line: usize, message: String },

    #[error("thread {thread}: {message}")]
    InvalidThread { thread: String, message: String },

    #[error("empty corpus: {0}")]
    EmptyCorpus(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("checkpoint {section}: {message}")]
    Checkpoint {
        section: &'static str,
        message: String,
    },

    #[error("enumeration limit exceeded: {states} states > limit {limit}")]
    EnumerationLimit { states: f64, limit: f64 },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("not found: {0}")]
    NotFound(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by numerical breakdown rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NonFinite(_))
    }
}
