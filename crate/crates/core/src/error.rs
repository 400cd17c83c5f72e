use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the selection, simulation and forecasting stack.
#[derive(Debug, Error)]
pub enum IpadError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("row {row} has {found} fields, expected {expected}")]
    RaggedRow { row: usize, expected: usize, found: usize },
    #[error("row {row}, column '{column}': cannot parse {value:?} as a finite number")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },
    #[error("response column {0} not found")]
    MissingColumn(String),
    #[error("column {index} has zero norm")]
    ZeroNormColumn { index: usize },
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("design matrix is rank deficient at pivot column {pivot}")]
    RankDeficient { pivot: usize },
    #[error("coordinate descent did not converge after {sweeps} sweeps (kkt violation {kkt_violation:e})")]
    NotConverged { sweeps: usize, kkt_violation: f64 },
    #[error("singular value decomposition failed")]
    SvdFailure,
}

pub type Result<T> = std::result::Result<T, IpadError>;

pub(crate) fn invalid(msg: impl Into<String>) -> IpadError {
    IpadError::InvalidArgument(msg.into())
}
