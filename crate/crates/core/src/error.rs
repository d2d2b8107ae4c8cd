use thiserror::Error;

/// Errors raised by the solvers and model constructors.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the operation's domain.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    /// The request exceeds what the routine supports (e.g. subset enumeration
    /// over too many users).
    #[error("capability exceeded: {0}")]
    Capability(String),

    /// An iterative method broke down. `trace` holds the best objective value
    /// per iteration up to the failure.
    #[error("numerical failure in {context} at iteration {iteration}")]
    NumericalFailure {
        context: String,
        iteration: usize,
        trace: Vec<f64>,
    },

    /// Time-sharing recovery could not deliver the offloaded bits.
    #[error("infeasible recovery: {0}")]
    InfeasibleRecovery(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
