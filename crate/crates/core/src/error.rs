use thiserror::Error;

/// Errors produced by metric evaluation, transforms, and solvers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("direction vector is zero")]
    ZeroDirection,
    #[error("parameter out of range: {0}")]
    ParamOutOfRange(String),
    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("unsupported surface dimension m = {0}")]
    UnsupportedDimension(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("no transition of the verdict on [{lo}, {hi}]")]
    NoTransition { lo: f64, hi: f64 },
    #[error("input is not even: odd energy fraction {odd_fraction:.3e}")]
    OddInput { odd_fraction: f64 },
    #[error("radon transform of F^-m is not positive ({0:.3e})")]
    NonPositiveDenominator(f64),
    #[error("non-positive quantity: {0}")]
    NonPositive(String),
    #[error("degenerate cell {0}")]
    DegenerateCell(usize),
    #[error("degenerate segment {0}")]
    DegenerateSegment(usize),
    #[error("finsler distance requires a Minkowski metric")]
    XDependentDistance,
    #[error("degenerate mesh triangle {0}")]
    MeshDegenerate(usize),
    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("ellipticity lost on triangle {triangle} (lambda {lambda:.3e})")]
    EllipticityLost { triangle: usize, lambda: f64 },
    #[error("io: {0}")]
    Io(String),
    #[error("format: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Format(e.to_string())
    }
}
