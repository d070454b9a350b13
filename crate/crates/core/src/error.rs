use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch { expected: Vec<usize>, actual: Vec<usize> },
    #[error("expected a 2-D tensor, got shape {0:?}")]
    NotTwoD(Vec<usize>),
    #[error("kernel {k_h}x{k_w} does not fit input {rows}x{cols}")]
    KernelTooLarge {
        k_h: usize,
        k_w: usize,
        rows: usize,
        cols: usize,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("{what}: expected {expected} rows, found {actual}")]
    RowCount {
        what: String,
        expected: usize,
        actual: usize,
    },
    #[error("column {0} has zero variance")]
    DegenerateColumn(usize),
    #[error("rejection sampling exhausted {0} attempts")]
    RetryBudget(usize),
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("exponent {value} outside [{v_min}, {v_max}] after optimizer step")]
    ConstraintViolation { value: f64, v_min: f64, v_max: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
