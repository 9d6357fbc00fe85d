use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("capacity error: state space has {size} states, above the bound of {bound}")]
    Capacity { size: u128, bound: u128 },
    #[error("unsupported input: {0}")]
    Unsupported(String),
    #[error("no convergence after {iterations} iterations (last span {last_span:e})")]
    Convergence { iterations: usize, last_span: f64 },
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("multi-start disagreement {disagreement:e} exceeds {limit:e}")]
    Uniqueness { disagreement: f64, limit: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid field `{path}`: {message}")]
    Validation { path: String, message: String },
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
