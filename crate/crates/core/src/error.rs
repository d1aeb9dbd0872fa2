use thiserror::Error;

/// Errors raised by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("index [{u}, {v}, {w}] outside {dims:?}")]
    Index { u: usize, v: usize, w: usize, dims: [usize; 3] },
    #[error("linear index {0} outside 1..={1}")]
    LinearIndex(usize, usize),
    #[error("kernel quadrature did not converge at offset {offset:?}, lag {lag}")]
    Assembly { offset: [i64; 3], lag: usize },
    #[error("lag-0 operator is singular: {0}")]
    Singular(String),
    #[error("time step {step}: {reason}")]
    March { step: usize, reason: String },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("probe point {point:?} is not a voxel center (nearest {nearest:?})")]
    OffCenter { point: [f64; 3], nearest: [f64; 3] },
    #[error("undefined result: {0}")]
    Undefined(String),
    #[error("malformed file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
