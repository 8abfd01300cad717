use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed table: {0}")]
    Csv(#[from] csv::Error),

    #[error("row {row} has {found} cells, expected {expected}")]
    RaggedRow {
        row: usize,
        found: usize,
        expected: usize,
    },

    #[error("duplicate column header {0:?}")]
    DuplicateHeader(String),

    #[error("table has no header row")]
    MissingHeader,

    #[error("unmapped rating {0:?}")]
    UnmappedRating(String),

    #[error("target column {0:?} not found")]
    MissingTarget(String),

    #[error("cannot parse {value:?} at row {row}, column {column:?} as a number")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },

    #[error("no rows left after dropping rows with missing values")]
    EmptyDataset,

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("class {class} has {count} sample(s); stratified split needs at least 2")]
    Stratification { class: u32, count: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value in input matrix")]
    NonFinite,

    #[error("eigensolver did not converge after {sweeps} sweeps")]
    NumericalFailure { sweeps: usize },

    #[error("not testable: {0}")]
    NotTestable(String),

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("empty selection: {0}")]
    EmptySelection(String),

    #[error("feature count mismatch: model expects {expected}, got {found}")]
    FeatureMismatch { expected: usize, found: usize },

    #[error("unknown feature {0:?}")]
    UnknownFeature(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag used in structured error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Csv(_) => "csv",
            Error::RaggedRow { .. } => "ragged_row",
            Error::DuplicateHeader(_) => "duplicate_header",
            Error::MissingHeader => "missing_header",
            Error::UnmappedRating(_) => "unmapped_rating",
            Error::MissingTarget(_) => "missing_target",
            Error::Parse { .. } => "parse",
            Error::EmptyDataset => "empty_dataset",
            Error::DegenerateData(_) => "degenerate_data",
            Error::Stratification { .. } => "stratification",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::NonFinite => "non_finite",
            Error::NumericalFailure { .. } => "numerical_failure",
            Error::NotTestable(_) => "not_testable",
            Error::NotApplicable(_) => "not_applicable",
            Error::EmptySelection(_) => "empty_selection",
            Error::FeatureMismatch { .. } => "feature_mismatch",
            Error::UnknownFeature(_) => "unknown_feature",
            Error::Invariant(_) => "invariant",
            Error::Json(_) => "json",
            Error::Config(_) => "config",
        }
    }
}
