use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("mask dimensions must be at least 1x1")]
    EmptyDimensions,
    #[error("dimension mismatch: {left:?} vs {right:?}")]
    DimensionMismatch { left: (usize, usize), right: (usize, usize) },
    #[error("expected {expected} pixels, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("malformed RLE: runs sum to {actual}, mask has {expected} pixels")]
    MalformedRle { expected: u64, actual: u64 },
    #[error("invalid box {0:?}")]
    InvalidBox([f64; 4]),
    #[error("score {0} outside [0, 1]")]
    InvalidScore(f64),
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("missing file {0}")]
    MissingFile(PathBuf),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("schema violation in {location}: {message}")]
    Schema { location: String, message: String },
    #[error("unknown split {0:?}; expected one of train, val, testA, testB")]
    UnknownSplit(String),
    #[error("infeasible synthetic config: {0}")]
    InfeasibleConfig(String),
    #[error("image error on {path}: {message}")]
    Image { path: PathBuf, message: String },
}

impl DatasetError {
    pub(crate) fn schema(location: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Schema {
            location: location.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("no samples to evaluate")]
    EmptyInput,
    #[error("prediction/ground-truth misalignment for ref ids {0:?}")]
    RefMismatch(Vec<String>),
    #[error("prediction for ref {ref_id} is missing a confidence score")]
    MissingScore { ref_id: String },
    #[error("reference corpus needs at least 2 documents, got {0}")]
    CorpusTooSmall(usize),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}
