use std::path::PathBuf;

use thiserror::Error;

use crate::nnls::NnlsError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite value in {factor} after sweep {sweep}")]
    NonFinite { factor: String, sweep: usize },

    #[error(transparent)]
    Nnls(#[from] NnlsError),

    #[error("query has no views present")]
    NoViewsPresent,

    #[error("unknown view `{0}`")]
    UnknownView(String),

    #[error("unknown item ids: {}", .0.join(", "))]
    UnknownItems(Vec<String>),

    #[error("cluster index {index} out of range for rank {rank}")]
    ClusterOutOfRange { index: usize, rank: usize },

    #[error("empty cohort")]
    EmptyCohort,

    #[error("labels contain a single class")]
    SingleClass,

    #[error("zero query vector under cosine similarity")]
    ZeroVector,

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}
