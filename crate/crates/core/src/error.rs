use thiserror::Error;

/// Errors raised by the numerical routines in this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum IfsError {
    #[error("iterate {step} is not finite (the system diverged)")]
    NonFiniteState { step: usize },

    #[error("sampled probe pair is degenerate (distance {distance:e} < 1e-12)")]
    DegenerateProbe { distance: f64 },

    #[error("precondition violated: {condition} (margin {margin:e})")]
    PreconditionViolation { condition: String, margin: f64 },

    #[error("batch size {b} does not divide dataset size {n}")]
    IndivisibleBatch { n: usize, b: usize },

    #[error("preconditioner is not positive definite")]
    NotPositiveDefinite,

    #[error("shifted batch Hessian of batch {batch} is singular")]
    SingularBatchHessian { batch: usize },

    #[error("only {surviving} scales survive the saturation filter, need at least 4")]
    InsufficientScales { surviving: usize },

    #[error("mean log Jacobian norm {mean_log:e} is not negative; the system is not contractive on average")]
    NonContractiveEstimate { mean_log: f64 },

    #[error("operator maps the start vector to (numerically) zero")]
    ZeroOperator,

    #[error("mean log norm {inverse_r:e} is too close to zero for R to be defined")]
    ZeroMeanLogNorm { inverse_r: f64 },

    #[error("dense oracle limited to dimension 64, got {dim}")]
    DimensionTooLarge { dim: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed data at row {row}: {message}")]
    MalformedRow { row: usize, message: String },

    #[error("I/O error: {0}")]
    Io(String),
}

impl From<std::io::Error> for IfsError {
    fn from(e: std::io::Error) -> Self {
        IfsError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, IfsError>;
