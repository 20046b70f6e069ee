use alloc::boxed::Box;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },

    #[error("data length {len} does not match shape {rows}x{cols}")]
    ShapeMismatch { rows: usize, cols: usize, len: usize },

    #[error("no calibration batches supplied")]
    NoCalibration,

    #[error("matrix is not symmetric (max relative asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("principal submatrix is numerically singular (condition estimate {cond_estimate:e})")]
    SingularSubmatrix { cond_estimate: f64 },

    #[error("column indices must be non-empty, strictly increasing and below {bound}")]
    InvalidIndices { bound: usize },

    #[error("{cols} columns are not divisible by group size {group}")]
    ColsNotDivisible { cols: usize, group: usize },

    #[error("{count} combinations exceed the enumeration limit {limit}")]
    TooManyCombinations { count: u128, limit: u128 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),

    #[error("masked weight ({row}, {col}) is nonzero after compensation")]
    ConstraintViolated { row: usize, col: usize },

    #[error("block {block}: {source}")]
    Block { block: usize, source: Box<Error> },
}
