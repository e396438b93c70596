//! Error type shared across the toolkit.
//!
//! Variants are grouped into three exit-code classes used by the CLI:
//! configuration (1), data (2), numeric (3).

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("unknown label {label:?} at line {line} (expected OFF or NOT)")]
    Label { line: usize, label: String },

    #[error("duplicate tweet id {id:?} at line {line}")]
    DuplicateId { line: usize, id: String },

    #[error("split sizes {requested} do not match corpus size {actual}")]
    Split { requested: usize, actual: usize },

    #[error("cannot rebalance: {0}")]
    Rebalance(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("lexicon error in {path}: {msg}")]
    Lexicon { path: String, msg: String },

    #[error("embedding format error at line {line}: {msg}")]
    EmbeddingFormat { line: usize, msg: String },

    #[error("feature fit error: {0}")]
    Fit(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("numeric error at epoch {epoch}: {msg}")]
    Numeric { epoch: usize, msg: String },

    #[error("training error: {0}")]
    Training(String),

    #[error("prediction error: {0}")]
    Prediction(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("analysis error: {0}")]
    Analysis(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// CLI exit code class: 1 = configuration, 2 = data, 3 = numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Lexicon { .. } => 1,
            Error::Numeric { .. } => 3,
            _ => 2,
        }
    }
}
