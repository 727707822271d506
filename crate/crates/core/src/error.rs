use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("corpus is empty after filtering")]
    EmptyCorpus,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid record: {0}")]
    InvalidRecord(String),

    #[error("unknown channel `{0}`")]
    UnknownChannel(String),

    /// The channel exists but has no usable embedding (too little subscription data).
    #[error("unsupported channel `{0}`: no usable embedding")]
    UnsupportedChannel(String),

    #[error("vector has zero norm")]
    ZeroNorm,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("no labeled channel has an embedding")]
    NoLabeledEmbeddings,

    #[error("label kind mismatch: expected {expected}, got {got}")]
    LabelKind { expected: &'static str, got: &'static str },

    #[error("invalid label: {0}")]
    InvalidLabel(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// The subscription source failed; the caller may retry.
    #[error("subscription source failed (retryable): {0}")]
    Source(String),

    #[error("{path}:{line}: {msg}")]
    Format { path: PathBuf, line: usize, msg: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Format { path: path.into(), line, msg: msg.into() }
    }

    /// True for errors caused by malformed input data rather than by the computation.
    pub fn is_input_format(&self) -> bool {
        matches!(
            self,
            Error::Format { .. }
                | Error::Json(_)
                | Error::Csv(_)
                | Error::InvalidRecord(_)
                | Error::InvalidLabel(_)
        )
    }

    /// True for errors that mean "nothing left to work with".
    pub fn is_empty_result(&self) -> bool {
        matches!(self, Error::EmptyCorpus | Error::EmptyInput(_) | Error::NoLabeledEmbeddings)
    }

    pub fn is_retryable(&self) -> bool {
        matches!(self, Error::Source(_))
    }
}
