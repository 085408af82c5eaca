use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("lambda {0} is outside [0, 1]")]
    InvalidLambda(f64),

    #[error("replacement ratio {0} is outside [0, 0.5]")]
    InvalidMRatio(f64),

    #[error("beta shape parameters must be positive and finite (alpha={alpha}, beta={beta})")]
    InvalidBetaParams { alpha: f64, beta: f64 },

    #[error("M={m} is too large for batch size {batch_size} (need 2M <= B)")]
    MTooLarge { m: usize, batch_size: usize },

    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch { left: Vec<usize>, right: Vec<usize> },

    #[error("feature dimension mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },

    #[error("cannot mix pair {0} with itself")]
    SelfMix(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid image tensor: {0}")]
    InvalidImage(String),

    #[error("invalid feature matrix: {0}")]
    InvalidMatrix(String),

    #[error("dataset of {size} pairs is smaller than batch size {batch_size}")]
    DatasetTooSmall { size: usize, batch_size: usize },

    #[error("batch size must be positive")]
    EmptyBatch,

    #[error("manifest line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },

    #[error("duplicate id {id:?} (line {line})")]
    DuplicateId { id: String, line: usize },

    #[error("failed to decode {path}: {reason}")]
    Decode { path: PathBuf, reason: String },

    #[error("unsupported image format: {0}")]
    UnsupportedFormat(PathBuf),

    #[error("bad tensor file magic {0:?}")]
    BadMagic([u8; 4]),

    #[error("unsupported tensor file version {0}")]
    UnsupportedVersion(u8),

    #[error("unsupported tensor dtype code {0}")]
    UnsupportedDtype(u8),

    #[error("tensor payload is {actual} bytes, header requires {expected}")]
    LengthMismatch { expected: u64, actual: u64 },

    #[error("expected a rank-{expected} tensor, found rank {actual}")]
    RankMismatch { expected: usize, actual: usize },

    #[error("inconsistent ground truth: {0}")]
    InconsistentGroundTruth(String),

    #[error("invalid score matrix: {0}")]
    InvalidScores(String),

    #[error("destination {path} is not writable: {source}")]
    DestinationUnwritable {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("batch {batch_index}, record {id}: {source}")]
    Record {
        batch_index: u64,
        id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// True for errors caused by bad arguments rather than bad data or IO.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::InvalidLambda(_)
                | Error::InvalidMRatio(_)
                | Error::InvalidBetaParams { .. }
                | Error::MTooLarge { .. }
                | Error::DatasetTooSmall { .. }
                | Error::EmptyBatch
                | Error::InvalidConfig(_)
        )
    }
}
