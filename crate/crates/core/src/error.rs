use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the segmentation engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty sequence")]
    EmptySequence,

    #[error("invalid matrix shape: {0}")]
    Shape(String),

    #[error("non-finite value at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("degenerate embedding row {row} (norm {norm:e})")]
    DegenerateRow { row: usize, norm: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("label index {index} out of range for vocabulary of {n}")]
    LabelOutOfRange { index: usize, n: usize },

    #[error("invalid hyperparameter: {0}")]
    InvalidParam(String),

    #[error("bin count {k} exceeds frame count {t}")]
    TooManyBins { k: usize, t: usize },

    #[error("{path}: bad magic (expected \"OVTE\")")]
    BadMagic { path: PathBuf },

    #[error("{path}: unsupported format version {version}")]
    UnsupportedVersion { path: PathBuf, version: u32 },

    #[error("{path}: truncated payload (header declares {expected} bytes, found {found})")]
    TruncatedPayload { path: PathBuf, expected: u64, found: u64 },

    #[error("{path}: NaN or infinite value at element {index}")]
    NanPayload { path: PathBuf, index: usize },

    #[error("{path}:{line}: unknown label {label:?}")]
    UnknownLabel { path: PathBuf, line: usize, label: String },

    #[error("{path}: empty ground-truth file")]
    EmptyGroundTruth { path: PathBuf },

    #[error("frame count mismatch: embeddings have {emb} frames, ground truth has {gt}")]
    LengthMismatch { emb: usize, gt: usize },

    #[error("invalid manifest: {0}")]
    Manifest(String),

    #[error("no videos: {0}")]
    NoVideos(String),

    #[error("video {id:?} matches no bin")]
    NoBin { id: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("video {id}: {source}")]
    Video {
        id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
