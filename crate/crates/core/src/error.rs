use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{0}: file contains no triples")]
    EmptyFile(PathBuf),

    #[error("graph is empty")]
    EmptyGraph,

    #[error("infeasible synthetic graph: {0}")]
    Infeasible(String),

    #[error("unknown {kind} label `{label}`")]
    UnknownLabel { kind: &'static str, label: String },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("max_len {0} cannot hold the query skeleton (need at least 7)")]
    SequenceTooShort(usize),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("forward trace is stale: model changed since the forward pass")]
    StaleTrace,

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("non-finite value during training: {0}")]
    NonFinite(String),

    #[error("gold class {0} is not among the candidates")]
    GoldNotCandidate(usize),

    #[error("empty rank list")]
    NoRanks,

    #[error("empty subtask: {0}")]
    EmptySubtask(String),

    #[error("invalid benchmark setup: {0}")]
    Bench(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
