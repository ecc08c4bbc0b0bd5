use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("ontology contains a directed cycle through node `{0}`")]
    Cycle(String),

    #[error("node `{node}` has more than one parent (`{first}` and `{second}`)")]
    MultiParent {
        node: String,
        first: String,
        second: String,
    },

    #[error("ontology must have exactly one root, found {}: {}", .0.len(), .0.join(", "))]
    Orphan(Vec<String>),

    #[error("unknown node `{0}`")]
    UnknownNode(String),

    #[error("unknown {kind} code `{code}`")]
    UnknownCode { kind: String, code: String },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("quantifier over an empty domain")]
    EmptyDomain,

    #[error("knowledge base has no axioms")]
    EmptyKnowledgeBase,

    #[error("metric undefined: {0}")]
    UndefinedMetric(&'static str),

    #[error("loss diverged at epoch {epoch} ({phase})")]
    Divergence { epoch: usize, phase: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
