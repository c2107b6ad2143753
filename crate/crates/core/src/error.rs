//! Library error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Rates or initial data violate the model constraints.
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    /// A quarantine schedule is unsorted, overlapping, or otherwise malformed.
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    /// An operation was evaluated outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// An iterative solver exhausted its budget without meeting tolerance.
    #[error("no convergence in {context}: last residual {residual:e}")]
    Nonconvergence { context: String, residual: f64 },

    /// A combinatorial enumeration would exceed its instance budget.
    #[error("enumeration budget exceeded: {0}")]
    BudgetExceeded(String),

    /// A cross-check that should hold by construction failed.
    #[error("internal inconsistency: {0}")]
    Inconsistency(String),

    /// An argument fell outside the range covered by the data.
    #[error("out of range: {0}")]
    OutOfRange(String),

    /// File output failed.
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn invalid_params(msg: impl Into<String>) -> Self {
        Error::InvalidParams(msg.into())
    }

    pub(crate) fn invalid_schedule(msg: impl Into<String>) -> Self {
        Error::InvalidSchedule(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn nonconvergence(context: impl Into<String>, residual: f64) -> Self {
        Error::Nonconvergence {
            context: context.into(),
            residual,
        }
    }
}
