use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{0}")]
    Assumption(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("fields live on different grids")]
    DomainMismatch,

    #[error("matrix is not positive definite (pivot {pivot} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    #[error("singular matrix at column {0}")]
    Singular(usize),

    #[error("linear solve residual {residual:.3e} exceeds tolerance {tolerance:.3e}")]
    LinearResidual { residual: f64, tolerance: f64 },

    #[error("eigensolver did not converge after {iterations} iterations (worst residual {residual:.3e})")]
    EigenNonConvergence { iterations: usize, residual: f64 },

    #[error("scalar resolvent failed for y = {y}: {reason}")]
    ScalarResolvent { y: f64, reason: String },

    #[error("nonlinear solve diverged after {iterations} iterations; residual trace {trace:?}")]
    NonlinearDivergence { iterations: usize, trace: Vec<f64> },

    #[error("time {t} outside boundary data range [{start}, {end}]")]
    TimeOutOfRange { t: f64, start: f64, end: f64 },

    #[error("stability violation: {0}")]
    Stability(String),

    #[error("noise coefficients not Hilbert-Schmidt: {0}")]
    HilbertSchmidt(String),

    #[error("step {step}: {source}")]
    Step { step: usize, source: Box<Error> },

    #[error("config: {0}")]
    Config(String),

    #[error("config parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
