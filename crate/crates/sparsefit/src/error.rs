use thiserror::Error;

/// Errors surfaced by table handling, encoding, fitting and exploration.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    #[error("column `{column}` has kind {actual}, expected {expected}")]
    ColumnKind {
        column: String,
        expected: &'static str,
        actual: &'static str,
    },

    #[error("column `{column}` already exists")]
    DuplicateColumn { column: String },

    #[error("column `{column}` has {len} rows, table has {expected}")]
    RaggedColumn {
        column: String,
        len: usize,
        expected: usize,
    },

    #[error("need at least {min} rows, got {got}")]
    TooFewRows { min: usize, got: usize },

    #[error("tune fraction must lie strictly between 0 and 1, got {0}")]
    BadTuneFraction(f64),

    #[error("no target column designated")]
    NoTarget,

    #[error("target column `{column}` has a missing value at row {row}")]
    MissingTarget { column: String, row: usize },

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error(
        "interaction expansion needs {needed} features, cap is {cap}; \
         prune encoders or lower the interaction order"
    )]
    FeatureCapExceeded { needed: usize, cap: usize },

    #[error("non-finite value in {context}")]
    NonFinite { context: &'static str },

    #[error("feature matrix has {rows} rows but {targets} target values")]
    RowTargetMismatch { rows: usize, targets: usize },

    #[error("scoring input is missing column `{column}` required by the fitted pipeline")]
    SchemaDrift { column: String },

    #[error("search space is empty: no experiment can be materialized")]
    EmptySearchSpace,

    #[error("model serialization failed: {0}")]
    Serialize(#[from] serde_json::Error),
}
