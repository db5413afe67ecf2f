use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The chip does not contain a measurable edge.
    #[error("measurement error: {0}")]
    Measurement(String),

    /// A residual function produced a non-finite value.
    #[error("evaluation error: {0}")]
    Evaluation(String),

    /// A least-squares fit failed to converge or diverged.
    #[error("fit error: {message} (residual norm {residual_norm:.3e}, params {params:?})")]
    Fit {
        message: String,
        params: Vec<f64>,
        residual_norm: f64,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
