use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected_w}x{expected_h}, got {actual_w}x{actual_h}")]
    DimensionMismatch {
        expected_w: usize,
        expected_h: usize,
        actual_w: usize,
        actual_h: usize,
    },

    #[error("run lengths sum to {actual}, expected {expected}")]
    RunSumMismatch { expected: u64, actual: u64 },

    #[error("frame {frame} has no flow to the next frame")]
    MissingFlow { frame: usize },

    #[error("frame {frame} is the last frame but carries a flow field")]
    UnexpectedFlow { frame: usize },

    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("frame {frame} has {count} candidates, limit is {limit}")]
    TooManyCandidates {
        frame: usize,
        count: usize,
        limit: usize,
    },

    #[error("instance too large for exhaustive search: {reason}")]
    InstanceTooLarge { reason: String },

    #[error("shortlist for frame {frame} is empty")]
    EmptyShortlist { frame: usize },

    #[error("bad magic in {}", path.display())]
    BadMagic { path: PathBuf },

    #[error("{} is truncated: expected {expected} bytes, found {actual}", path.display())]
    TruncatedFile {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },

    #[error("value {value} out of range in {}", path.display())]
    ValueOutOfRange { path: PathBuf, value: f64 },

    #[error("parse error in {} at byte {offset}: {message}", path.display())]
    Parse {
        path: PathBuf,
        offset: usize,
        message: String,
    },

    #[error("duplicate candidate id {id}")]
    DuplicateId { id: u32 },

    #[error("frame {frame} has no candidate with id {id}")]
    UnknownId { frame: i64, id: u32 },

    #[error("candidate {id} has an empty mask")]
    EmptyCandidate { id: u32 },

    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),

    #[error("{}: {source}", path.display())]
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

    pub(crate) fn parse(path: impl Into<PathBuf>, offset: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            offset,
            message: message.into(),
        }
    }

    pub(crate) fn dims(expected: (usize, usize), actual: (usize, usize)) -> Self {
        Error::DimensionMismatch {
            expected_w: expected.0,
            expected_h: expected.1,
            actual_w: actual.0,
            actual_h: actual.1,
        }
    }
}
