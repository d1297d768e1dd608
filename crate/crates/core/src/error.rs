use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("invalid dropout rate {0}: must satisfy 0 <= p < 1")]
    InvalidRate(f64),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("backward called without a matching forward pass")]
    StaleCache,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{path}: row {row}: expected {expected} columns, found {found}")]
    MalformedRow {
        path: PathBuf,
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("{path}: row {row}: label {label} outside 0..=4")]
    LabelRange {
        path: PathBuf,
        row: usize,
        label: String,
    },

    #[error("{path}: row {row}, column {column}: non-numeric cell {cell:?}")]
    NonNumericCell {
        path: PathBuf,
        row: usize,
        column: usize,
        cell: String,
    },

    #[error("{path}: row {row}, column {column}: pixel value {value} outside 0..=255")]
    PixelRange {
        path: PathBuf,
        row: usize,
        column: usize,
        value: f64,
    },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("class {class}: {message}")]
    ClassCount { class: usize, message: String },

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("member weights sum to {0}, expected 1")]
    WeightSum(f64),

    #[error("class {0} has only one population in the scores (need positives and negatives)")]
    SingleClassPopulation(usize),

    #[error("singular system in surrogate fit")]
    Singular,

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
