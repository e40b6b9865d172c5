use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The exact result exceeds the largest finite double.
    #[error("overflow: {0}")]
    Overflow(String),

    /// An iterative or adaptive routine could not reach the requested accuracy.
    #[error("numerical failure: {message} (achieved error bound {achieved:e})")]
    NumericalFailure { message: String, achieved: f64 },

    /// The configuration is valid but a closed form does not cover it.
    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    /// No threshold multiplier produces the requested false-alarm rate.
    #[error("unreachable target: {0}")]
    UnreachableTarget(String),

    /// An adjudication report cannot be used for the request.
    #[error("adjudication report: {0}")]
    Report(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
