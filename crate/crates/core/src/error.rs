use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown label: {0:?}")]
    UnknownLabel(String),

    #[error("none is exclusive: {0:?}")]
    NoneIsExclusive(String),

    #[error("empty label")]
    EmptyLabel,

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("duplicate id: {0}")]
    DuplicateId(String),

    #[error("pathway none has no corpus")]
    NoneCorpus,

    #[error("zero vector")]
    ZeroVector,

    #[error("no features: input produced no character 3-grams")]
    NoFeatures,

    #[error("dimension {0} too small (minimum 8)")]
    DimTooSmall(usize),

    #[error("k must be at least 1")]
    InvalidK,

    #[error("corpora not embeddable in one space: dimensions {0:?}")]
    NotEmbeddableInOneSpace(Vec<usize>),

    #[error("bad magic in {path}: expected {expected}")]
    BadMagic { path: PathBuf, expected: &'static str },

    #[error("truncated vector file {path}: expected {expected} bytes, found {actual}")]
    Truncated {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },

    #[error("count mismatch in {what}: manifest says {expected}, found {actual}")]
    CountMismatch {
        what: String,
        expected: usize,
        actual: usize,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("missing corpus for pathway {0}")]
    MissingCorpus(String),

    #[error("service transport failure: {0}")]
    Transport(String),

    #[error("malformed service reply: {0}")]
    MalformedReply(String),

    #[error("generator unavailable: {0}")]
    GeneratorUnavailable(String),

    #[error("embedder failure: {0}")]
    Embedder(String),

    #[error("query id mismatch: {0}")]
    IdMismatch(String),

    #[error("incomplete table: {0}")]
    IncompleteTable(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("insufficient memory: need ~{needed} bytes, {available} available")]
    InsufficientMemory { needed: u64, available: u64 },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
