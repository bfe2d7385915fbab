use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("I/O error: {0}")]
    Stream(#[from] io::Error),

    #[error("line {line}: malformed JSON: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("line {line}: invalid record{}: {reason}", creative.as_ref().map(|c| format!(" (creative {c})")).unwrap_or_default())]
    Validation {
        line: usize,
        creative: Option<String>,
        reason: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("term coordinate (line {line}, pos {pos}) outside the examination matrix")]
    OutOfBounds { line: usize, pos: usize },

    #[error("loss became non-finite at iteration {iteration}")]
    NonFiniteLoss { iteration: usize },

    #[error("alternating training diverged; objective trace {trace:?}")]
    Divergence { trace: Vec<f64> },

    #[error("statistics fingerprint mismatch: expected {expected}, found {found}")]
    FingerprintMismatch { expected: String, found: String },

    #[error("cannot split {groups} adgroups into {k} folds")]
    Folds { k: usize, groups: usize },

    #[error("empty {0}")]
    Empty(&'static str),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
