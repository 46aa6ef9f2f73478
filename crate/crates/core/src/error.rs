use thiserror::Error;

/// Errors produced by the reconstruction pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid size n = {0}")]
    InvalidSize(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("no neighbour difference exceeds the jump threshold {threshold}")]
    NoJumpDetected { threshold: f64 },
    #[error("partition failure: flood fill produced {components} component(s)")]
    PartitionFailure { components: usize },
    #[error("no valid edge window around anchor ({0}, {1})")]
    NoValidWindow(usize, usize),
    #[error("singular linear system")]
    SingularLinearSystem,
    #[error("singular Jacobian (det = {det:e})")]
    SingularJacobian { det: f64 },
    #[error("Newton iteration diverged after {iters} iterations (residual {residual:e})")]
    NewtonDivergence { iters: usize, residual: f64 },
    #[error("no quadratic arc survived chaining")]
    EmptyChain,
    #[error("least-squares normal matrix is numerically singular (condition {condition:e})")]
    SingularSystem { condition: f64 },
    #[error("spline has constant sign on every contour sample")]
    EmptyContour,
    #[error("quasi-interpolation window around ({0}, {1}) is incomplete")]
    IncompleteWindow(i64, i64),
    #[error("cannot extend cell ({0}, {1}): no valid run in any axis direction")]
    InsufficientValidRun(i64, i64),
    #[error("point ({0}, {1}) lies outside the unit square")]
    OutOfDomain(f64, f64),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
