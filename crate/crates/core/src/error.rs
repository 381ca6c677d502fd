use thiserror::Error;

/// Failure modes shared by every module.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Argument outside the mathematical domain of the routine.
    #[error("domain error: {0}")]
    Domain(String),
    /// Malformed or inconsistent input.
    #[error("validation error: {0}")]
    Validation(String),
    /// An iterative procedure did not reach its tolerance.
    #[error("convergence failure in {what}: residual {residual:e} after {iterations} iterations")]
    Convergence {
        what: String,
        residual: f64,
        iterations: usize,
    },
    /// The discretisation cannot represent the request.
    #[error("resolution error: {0}")]
    Resolution(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn validation(msg: impl Into<String>) -> Error {
    Error::Validation(msg.into())
}
