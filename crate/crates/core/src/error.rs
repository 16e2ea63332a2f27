use thiserror::Error;

use crate::qp::QpStatus;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not symmetric at ({row}, {col})")]
    NotSymmetric { row: usize, col: usize },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("hard-margin problem is infeasible: data is not separable by this model class")]
    HardMarginInfeasible,

    #[error("QP solver did not converge (status {0:?})")]
    SolverFailure(QpStatus),

    #[error("data set is not linearly separable")]
    NotLinearlySeparable,

    #[error("data set is not quadratically separable")]
    NotQuadraticallySeparable,

    #[error(
        "rejection sampling gave up after {draws} draws; surface and sampling box do not match"
    )]
    RejectionBudgetExceeded { draws: u64 },

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("expected exactly two classes, found {found}")]
    NotTwoClasses { found: usize },

    #[error("data set has no samples")]
    EmptyDataset,

    #[error("malformed model file: {0}")]
    ModelFormat(String),

    #[error("problem too large for the enumeration oracle ({variables} variables, {constraints} constraints)")]
    OracleTooLarge {
        variables: usize,
        constraints: usize,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
