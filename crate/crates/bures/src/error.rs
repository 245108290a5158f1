use thiserror::Error;

/// Crate-wide error type. The CLI maps variants onto exit codes:
/// parameter errors exit 2, convergence failures exit 3, consistency
/// failures exit 4.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter error: {0}")]
    Parameter(String),

    /// A Mellin-Barnes contour integration stopped before reaching the
    /// requested tolerance. Carries the best value and the achieved
    /// error estimate so callers with looser budgets can still use it.
    #[error("convergence failure: estimate {value:.6e} with error bound {err_bound:.2e} misses tolerance {tol:.2e}")]
    Convergence { value: f64, err_bound: f64, tol: f64 },

    #[error("consistency check failed: {0}")]
    Consistency(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn parameter(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub fn consistency(msg: impl Into<String>) -> Self {
        Error::Consistency(msg.into())
    }

    /// Process exit code for the CLI contract.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parameter(_) => 2,
            Error::Convergence { .. } => 3,
            Error::Consistency(_) => 4,
            Error::Io(_) => 1,
        }
    }
}
