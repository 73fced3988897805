use std::path::PathBuf;

use thiserror::Error;

use crate::sfa::Diagnostic;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("syntax error at {line}:{col}: {msg}")]
    Syntax {
        line: usize,
        col: usize,
        msg: String,
    },

    #[error("invalid SFA: {}", .0.first().map(|d| d.to_string()).unwrap_or_default())]
    InvalidSfa(Vec<Diagnostic>),

    #[error("enumeration cap exceeded: {count} > {cap}")]
    CapExceeded { count: u128, cap: u128 },

    #[error("invalid region: {0}")]
    InvalidRegion(String),

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("pattern error at offset {pos}: {msg}")]
    Pattern { pos: usize, msg: String },

    #[error("invalid dictionary term {0:?}")]
    BadTerm(String),

    #[error("representation {0} is not materialized")]
    MissingMode(String),

    #[error("line {0} not found")]
    MissingLine(usize),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error("corrupt artifact {path}: {msg}")]
    Corrupt { path: PathBuf, msg: String },

    #[error("malformed {table} record at line {line}: {msg}")]
    Table {
        table: String,
        line: usize,
        msg: String,
    },

    #[error("corpus is locked by another writer ({0})")]
    Locked(PathBuf),

    #[error("degenerate design matrix: {0}")]
    Degenerate(String),

    #[error("missing ground truth for query {0}")]
    MissingTruth(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn in_file(self, path: impl Into<PathBuf>) -> Error {
        Error::File {
            path: path.into(),
            source: Box::new(self),
        }
    }
}
