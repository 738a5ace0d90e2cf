use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("resource limit exceeded: {what} needs {requested} qubits, limit is {limit}")]
    Resource {
        what: &'static str,
        requested: usize,
        limit: usize,
    },
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },
    #[error("numerical consistency check failed: {0}")]
    Numerical(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("iterative eigensolver did not converge after {iterations} iterations (best residual {best_residual:e})")]
    Convergence {
        iterations: usize,
        best_residual: f64,
    },
    #[error("parameters outside the valid regime: {0}")]
    Regime(String),
    #[error("low-energy source returned energy {achieved:e}, above target {target:e}")]
    EnergyAboveTarget { achieved: f64, target: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn arg(message: impl Into<String>) -> Self {
        Error::Argument(message.into())
    }
}
