//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error in {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },

    #[error("JSON error in {context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("unknown column {column} in {context}")]
    UnknownColumn { column: String, context: String },

    #[error("missing value at row {row}, column {column}")]
    MissingValue { row: usize, column: String },

    #[error("outcome column {column} must be binary 0/1; found value {value}")]
    NonBinaryOutcome { column: String, value: String },

    #[error("column {column} is not numeric")]
    NotNumeric { column: String },

    #[error("column {column} is not categorical")]
    NotCategorical { column: String },

    #[error("column {column} has fewer than 4 distinct values; cannot bin into quartiles")]
    TooFewDistinct { column: String },

    #[error("hold-out column {column} may not be used as a model term")]
    HoldoutInModel { column: String },

    #[error("dimension mismatch: {context} (expected {expected}, got {got})")]
    DimensionMismatch {
        context: String,
        expected: usize,
        got: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("sampler initialization failed: log posterior non-finite after {retries} jitter retries")]
    BadInit { retries: usize },

    #[error("every warmup iteration diverged; the target is numerically pathological")]
    AllDivergentWarmup,

    #[error("diagnostics need at least {needed} chains, got {got}; run more chains")]
    TooFewChains { needed: usize, got: usize },

    #[error("leave-one-out refit for observation {fold} failed diagnostics (split R-hat {rhat:.4} > {limit:.2})")]
    LooRefitDiverged { fold: usize, rhat: f64, limit: f64 },

    #[error("{0}")]
    Invalid(String),
}
