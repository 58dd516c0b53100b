use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("episode already finished; call reset before stepping again")]
    EpisodeFinished,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("insufficient data: need {needed} entries, have {available}")]
    InsufficientData { needed: usize, available: usize },

    #[error("invalid priority {0}: priorities must be finite and non-negative")]
    InvalidPriority(f64),

    #[error("query value {value} outside [0, {total}]")]
    QueryOutOfRange { value: f64, total: f64 },

    #[error("leaf index {index} out of range for {len} stored entries")]
    InvalidLeaf { index: usize, len: usize },

    #[error("refusing to write an empty metrics file")]
    EmptyMetrics,

    #[error("unsupported checkpoint version {found} (this build reads version {supported})")]
    CheckpointVersion { found: u64, supported: u64 },

    #[error("checkpoint shape mismatch: {0}")]
    CheckpointShape(String),

    #[error("failed to parse checkpoint: {0}")]
    CheckpointParse(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
