use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the data, model, training and evaluation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("ragged rows: row {row} has {got} fields, expected {expected}")]
    RaggedRows { row: usize, got: usize, expected: usize },

    #[error("unparseable label {value:?} in row {row}")]
    UnparseableLabel { row: usize, value: String },

    #[error("unparseable value {value:?} in row {row}, column {column:?}")]
    UnparseableValue { row: usize, column: String, value: String },

    #[error("unknown label column {0:?}")]
    UnknownLabelColumn(String),

    #[error("zero data rows")]
    ZeroDataRows,

    #[error("insufficient anomalies: have {have}, need at least {need}")]
    InsufficientAnomalies { have: usize, need: usize },

    #[error("insufficient normals: have {have}, need at least {need}")]
    InsufficientNormals { have: usize, need: usize },

    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite input")]
    NonFinite,

    #[error("empty set: {0}")]
    EmptySet(&'static str),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("shape mismatch: expected {expected} parameters, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("malformed model file: {0}")]
    MalformedModel(String),

    #[error("malformed stats file: {0}")]
    MalformedStats(String),

    #[error("unknown scenario {0:?}")]
    UnknownScenario(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable snake_case identifier used in machine-parsable error lines.
    pub fn code(&self) -> &'static str {
        match self {
            Error::MissingFile(_) => "missing_file",
            Error::RaggedRows { .. } => "ragged_rows",
            Error::UnparseableLabel { .. } => "unparseable_label",
            Error::UnparseableValue { .. } => "unparseable_value",
            Error::UnknownLabelColumn(_) => "unknown_label_column",
            Error::ZeroDataRows => "zero_data_rows",
            Error::InsufficientAnomalies { .. } => "insufficient_anomalies",
            Error::InsufficientNormals { .. } => "insufficient_normals",
            Error::InvalidDimension(_) => "invalid_dimension",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::NonFinite => "non_finite",
            Error::EmptySet(_) => "empty_set",
            Error::InvalidConfig(_) => "invalid_config",
            Error::ShapeMismatch { .. } => "shape_mismatch",
            Error::MalformedModel(_) => "malformed_model",
            Error::MalformedStats(_) => "malformed_stats",
            Error::UnknownScenario(_) => "unknown_scenario",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
