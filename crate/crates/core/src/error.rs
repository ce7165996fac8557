use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("required column {column:?} missing from CSV header")]
    MissingColumn { column: String },

    #[error("unparseable timestamp {text:?}: {reason}")]
    Timestamp { text: String, reason: &'static str },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("{0}")]
    Degenerate(String),

    #[error("model decode failed: {0}")]
    Decode(#[from] DecodeError),

    #[error("model encode failed: {0}")]
    Encode(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParam(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}

/// Structured failures from reading a compact `.rds1` model blob.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum DecodeError {
    #[error("bad magic {found:?}, expected \"RDS1\"")]
    BadMagic { found: [u8; 4] },

    #[error("unsupported version {0}")]
    Version(u16),

    #[error("truncated blob at offset {offset}: needed {needed} more bytes")]
    Truncated { offset: usize, needed: usize },

    #[error("tree {tree} node {node}: child index {child} out of range")]
    ChildOutOfRange { tree: usize, node: usize, child: i32 },

    #[error("tree {tree} node {node}: feature slot {slot} out of range")]
    FeatureOutOfRange { tree: usize, node: usize, slot: u16 },

    #[error("tree {tree}: malformed node {node}")]
    MalformedNode { tree: usize, node: usize },

    #[error("tree {tree} is empty")]
    EmptyTree { tree: usize },

    #[error("duplicate retained column {0}")]
    DuplicateColumn(u16),

    #[error("non-finite float at offset {offset}")]
    NonFinite { offset: usize },

    #[error("{0} trailing bytes after last tree")]
    TrailingBytes(usize),
}
