use thiserror::Error;

/// Errors raised while building models or running estimators.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violates its precondition (shape, power, unit modulus, ...).
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A correlation model is not Hermitian positive semidefinite.
    #[error("invalid channel model: {0}")]
    Model(String),

    /// A Hermitian factorization failed or is too badly conditioned to trust.
    #[error("numerical failure: {message} (condition estimate {condition:.3e})")]
    Numerical { message: String, condition: f64 },

    /// Every grid candidate of the CFO search was degenerate.
    #[error("CFO estimation failed: {0}")]
    Estimation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }
}
