use std::path::PathBuf;

use thiserror::Error;

use crate::backend::BackendError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown subject `{0}`")]
    UnknownSubject(String),

    #[error("no subject weight reaches the threshold {threshold}")]
    EmptyAfterThreshold { threshold: f64 },

    #[error("invalid subject weights: {0}")]
    InvalidWeights(String),

    #[error("could not parse annotation reply: {0}")]
    ParseFailure(String),

    #[error("weight {weight} for {subject} is outside [0, 1]")]
    InvalidWeight { subject: String, weight: f64 },

    #[error("annotation rounds share no subject")]
    NoConsensus,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite loss at epoch {epoch}, sample {sample}")]
    NonFiniteLoss { epoch: usize, sample: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unsupported checkpoint version {found} (expected {expected})")]
    VersionMismatch { found: u64, expected: u64 },

    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    #[error("model pool is empty")]
    EmptyPool,

    #[error("the `{0}` split is empty")]
    EmptySplit(String),

    #[error("upstream inputs do not match the {role} role: {detail}")]
    RoleInputMismatch { role: String, detail: String },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("no node of the graph has a selected model: {0}")]
    MissingSelection(String),

    #[error(transparent)]
    Backend(#[from] BackendError),

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
}
