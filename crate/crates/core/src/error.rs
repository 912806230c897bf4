use thiserror::Error;

/// Errors raised by problem evaluation, the subproblem solvers and the
/// outer iterations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("non-finite function value at x = {x:?}")]
    Evaluation { x: Vec<f64> },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("gradient vanishes, the current point is stationary")]
    StationaryPoint,

    #[error("residual is zero, the current point already solves the system")]
    AlreadyConverged,

    #[error("shifted matrix is not numerically positive definite at lambda = 0")]
    SingularAtZero,

    #[error("shifted matrix B + lambda I is not numerically positive definite at lambda = {lambda:e}")]
    ShiftedSingular { lambda: f64 },

    #[error("q-equation has no solution: projected residual ratio {ratio:.3e} >= q = {q:.3e}")]
    QEquationInfeasible { ratio: f64, q: f64 },

    #[error("secular Newton iteration did not converge within {iterations} iterations")]
    NewtonCapExceeded { iterations: usize },

    #[error("singular value decomposition did not converge")]
    DiagnosticsUnavailable,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unknown test problem '{0}'")]
    UnknownProblem(String),

    #[error("unknown initial guess selector '{selector}' for problem {problem}")]
    UnknownSelector { problem: String, selector: String },

    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
