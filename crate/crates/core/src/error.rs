use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}: bad magic 0x{found:08x} (expected 0x{expected:08x})")]
    BadMagic { path: PathBuf, expected: u32, found: u32 },

    #[error("{path}: truncated file at record {record}")]
    Truncated { path: PathBuf, record: usize },

    #[error("{source_name}: record {record}: {reason}")]
    BadRecord {
        source_name: String,
        record: usize,
        reason: String,
    },

    #[error("input outside [0,1]^n at coordinate {index} (value {value})")]
    OutOfBox { index: usize, value: f64 },

    #[error("degenerate top-2: p1 == p2")]
    DegenerateTopTwo,

    #[error("probability must lie in (0,1), got {0}")]
    ZeroProbability(f64),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("experiment spec: {0}")]
    Spec(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
