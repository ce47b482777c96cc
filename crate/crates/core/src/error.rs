use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised across the dissimilarity solver, density construction,
/// tuning, baselines and dataset handling.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("point set in R^{dim} needs at least {needed} points, got {got}")]
    TooFewPoints { dim: usize, needed: usize, got: usize },

    #[error("points do not affinely span R^{dim}")]
    NotSpanning { dim: usize },

    #[error("weights must be finite and strictly positive")]
    InvalidWeights,

    #[error("dual solver did not converge after {iterations} iterations (primal residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("matrix is singular or not positive definite")]
    SingularMatrix,

    #[error("degenerate range: every value equals {0}")]
    DegenerateRange(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid bisection bracket: c_max must be positive, got {0}")]
    InvalidBracket(f64),

    #[error("design matrix is rank deficient")]
    RankDeficient,

    #[error("series of length {len} is too short for {lags} lags")]
    TooShort { len: usize, lags: usize },

    #[error("requested {requested} pairs but only {available} are available")]
    InsufficientData { requested: usize, available: usize },

    #[error("trajectory became non-finite at step {0}")]
    NonFinite(usize),

    #[error("linear program is unbounded")]
    Unbounded,

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
