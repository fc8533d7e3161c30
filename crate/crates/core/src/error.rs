use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("trace too short: {got} samples, need at least {need}")]
    TooShort { got: usize, need: usize },

    #[error("line {line}: {msg}")]
    Parse { line: u64, msg: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("undefined rate: {0}")]
    UndefinedRate(&'static str),

    #[error("{0}")]
    Unsupported(String),

    #[error("search space too large: {candidates} candidate extractors exceeds bound {bound}")]
    SearchTooLarge { candidates: u128, bound: u128 },

    #[error("format version mismatch: file has {found}, expected {expected}")]
    Version { found: u32, expected: u32 },

    #[error("corrupt file: {0}")]
    Corrupt(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }
}
