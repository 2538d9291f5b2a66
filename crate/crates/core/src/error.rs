use thiserror::Error;

/// Errors surfaced by sampling, fitting and path traversal.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("rate must be positive and finite, got {0}")]
    InvalidRate(f64),
    #[error("box has zero linear dimension")]
    DegenerateBox,
    #[error("invalid box: {0}")]
    InvalidBox(String),
    #[error("lifetime must be finite and non-negative, got {0}")]
    InvalidLifetime(f64),
    #[error("box is not contained in the domain box")]
    NotContained,
    #[error("tree exceeded {0} nodes")]
    Explosion(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("regularization delta must be positive and finite, got {0}")]
    InvalidDelta(f64),
    #[error("singular rank-1 update: denominator {0:e}")]
    SingularUpdate(f64),
    #[error("cannot delete row/column: pivot {0:e}")]
    CannotDelete(f64),
    #[error("singular extension: Schur complement {0:e}")]
    SingularExtension(f64),
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("empty data")]
    EmptyData,
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("invalid hyperparameters: {0}")]
    InvalidParams(String),
    #[error("columns {0} and {1} are not the sibling pair of the youngest cut")]
    NotSiblings(usize, usize),
    #[error("insufficient samples: need {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("malformed tree document: {0}")]
    MalformedTree(String),
}

pub type Result<T> = std::result::Result<T, Error>;
