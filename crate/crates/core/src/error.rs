use thiserror::Error;

/// Errors raised by problem validation, linear algebra and the samplers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("initial point violates constraint {0}")]
    InfeasibleStart(usize),

    #[error("matrix is not positive definite (pivot {0})")]
    NotPositiveDefinite(usize),

    #[error("matrix is not symmetric (relative asymmetry {0:.3e})")]
    NotSymmetric(f64),

    #[error("triangular matrix has a zero diagonal entry at {0}")]
    SingularDiagonal(usize),

    #[error("Lanczos iteration did not converge after {0} iterations")]
    NoConvergence(usize),

    #[error("problem has no cached Cholesky factor; call prepare first")]
    MissingCholesky,

    #[error("problem has no cached {0}; call prepare first")]
    MissingCache(&'static str),

    #[error("state violates constraint {row} (slack {slack:.3e})")]
    InfeasibleState { row: usize, slack: f64 },

    #[error("exceeded {0} wall bounces in a single proposal")]
    TooManyBounces(usize),

    #[error("exceeded {0} events in a single proposal")]
    TooManyEvents(usize),

    #[error("constraint normal has zero length")]
    ZeroNormal,

    #[error("precondition violated: {0}")]
    PreconditionViolation(String),

    #[error("{0}")]
    UnsupportedConstraints(&'static str),

    #[error("series is constant; effective sample size is undefined")]
    DegenerateSeries,

    #[error("invalid bounds at coordinate {0}: lower must be below upper")]
    InvalidBounds(usize),

    #[error("constraint row {0} is all zeros")]
    ZeroConstraintRow(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
