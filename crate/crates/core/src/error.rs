use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid interval: c1 = {c1} must be strictly less than c2 = {c2}")]
    InvalidInterval { c1: f64, c2: f64 },
    #[error("weight exponent must be finite and non-negative, got {0}")]
    NegativeDelta(f64),
    #[error("moments above power {max} are not supported (requested {requested})")]
    UnsupportedPower { requested: usize, max: usize },
    #[error("exponent-times-length {0} is outside the representable range")]
    MomentOverflow(f64),
    #[error("degenerate orthogonal basis: {0}")]
    DegenerateBasis(String),
    #[error("matrix is not positive definite (min eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },
    #[error(
        "coupled block matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:e})"
    )]
    BlockNotPsd { min_eigenvalue: f64 },
    #[error(
        "quadrature did not converge: estimated error {error:e} after {subdivisions} subdivisions"
    )]
    QuadratureNonConvergence { error: f64, subdivisions: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("parameter out of range: {0}")]
    OutOfRange(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("constraint `{0}` is not symmetric")]
    NonSymmetric(String),
    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),
    #[error(
        "history does not cover [{needed_from}, {needed_to}] (available from {available_from})"
    )]
    InsufficientHistory {
        needed_from: f64,
        needed_to: f64,
        available_from: f64,
    },
    #[error("trajectory blew up at t = {t} (norm {norm:e})")]
    BlowUp { t: f64, norm: f64 },
    #[error("iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("trajectory reaches numerical zero before the fit window starts at {0}")]
    ZeroTrajectory(f64),
    #[error("no certified point in the searched range")]
    NoCertifiedPoint,
    #[error("malformed interchange data: {0}")]
    Format(String),
    #[error("i/o failure: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;
