use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid logits: {0}")]
    InvalidLogits(String),

    #[error("label {label} out of range for {num_classes} classes")]
    InvalidLabel { label: usize, num_classes: usize },

    #[error("shape mismatch: {0}")]
    ShapeError(String),

    #[error("invalid weight: {0}")]
    InvalidWeight(String),

    #[error("degenerate distribution: total weight is zero")]
    DegenerateDistribution,

    #[error("quantile level {0} outside (0, 1)")]
    InvalidQuantileLevel(f64),

    #[error("miscoverage level {0} outside (0, 1)")]
    InvalidAlpha(f64),

    #[error("calibration set is empty")]
    EmptyCalibration,

    #[error("degenerate training data: {0}")]
    DegenerateTraining(String),

    #[error("probability {0} outside the open interval (0, 1)")]
    InvalidProbability(f64),

    #[error("total variation {0} outside [0, 1]")]
    InvalidTv(f64),

    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),

    #[error("incompatible datasets: {0}")]
    IncompatibleDatasets(String),

    #[error("method {0} missing from report")]
    MissingMethod(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}:{line}: parse error: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}:{line}: dimension mismatch: {message}")]
    DimensionMismatch {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}:{line}: label {label} out of range for {num_classes} classes")]
    LabelOutOfRange {
        path: PathBuf,
        line: usize,
        label: usize,
        num_classes: usize,
    },

    #[error("{path}: expected {expected} values, found {found}")]
    LengthMismatch {
        path: PathBuf,
        expected: usize,
        found: usize,
    },

    #[error("{path}:{line}: negative weight {value}")]
    NegativeWeight {
        path: PathBuf,
        line: usize,
        value: f64,
    },

    #[error("record {id}: {message}")]
    RecordError { id: String, message: String },

    #[error("{path}: sha256 mismatch (manifest {expected}, file {actual})")]
    HashMismatch {
        path: PathBuf,
        expected: String,
        actual: String,
    },

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
