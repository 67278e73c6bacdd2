use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("negative weight {value} at index {index}")]
    NegativeWeight { index: usize, value: f64 },

    #[error("non-finite entry at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("matrix is not symmetric: |M[{i}][{j}] - M[{j}][{i}]| = {diff:e}")]
    NotSymmetric { i: usize, j: usize, diff: f64 },

    #[error("matrix is not positive semidefinite: smallest eigenvalue {min:e}, largest {max:e}")]
    NotPsd { min: f64, max: f64 },

    #[error("matrix has rank {rank} < {dim}; the polytope is unbounded")]
    RankDeficient { rank: usize, dim: usize },

    #[error("row {0} is identically zero")]
    ZeroRow(usize),

    #[error("more columns than rows ({n} x {d}); the polytope is unbounded")]
    TooFewRows { n: usize, d: usize },

    #[error("singular quadratic form (rank {rank} of {dim})")]
    Singular { rank: usize, dim: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("all weights are zero")]
    ZeroWeights,

    #[error("sampled quadratic is rank deficient after {attempts} attempts")]
    RankDeficientSample { attempts: usize },

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("Sherman-Morrison denominator {0:e} below tolerance")]
    IllConditionedUpdate(f64),

    #[error("stream yielded {got} rows on pass {pass}, expected {expected}")]
    StreamLength { pass: usize, expected: usize, got: usize },

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
