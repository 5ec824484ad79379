use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid label: {0:?}")]
    InvalidLabel(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("element has no supporting corpus queries")]
    ElementUnsupported,

    #[error("candidate pool is empty")]
    EmptyPool,

    #[error("unknown model {0:?}")]
    UnknownModel(String),

    #[error("alpha mismatch: index built with {index}, request uses {requested}")]
    AlphaMismatch { index: f64, requested: f64 },

    #[error("embedding provider unavailable: {0}")]
    EmbeddingUnavailable(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: {message}")]
    Range { line: usize, message: String },

    #[error("corpus error: {0}")]
    Corpus(String),

    #[error("conflict: {0}")]
    Conflict(String),

    #[error("unsupported index format version {found} (supported: {supported})")]
    Version { found: u64, supported: u64 },

    #[error("corrupt index file: {0}")]
    Format(String),

    #[error("invalid query: {0}")]
    InvalidQuery(String),

    #[error("could not parse tagger response: {0}")]
    TaggerParse(String),

    #[error("no tags recorded for query {0:?}")]
    MissingTags(String),

    #[error("tagger unavailable: {0}")]
    TaggerUnavailable(String),

    #[error("trace error: {0}")]
    Trace(String),

    #[error("empty input")]
    EmptyInput,

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
