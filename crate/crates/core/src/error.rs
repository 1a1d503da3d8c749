use thiserror::Error;

/// Errors raised by the numerical kernels, the path engine and the estimators.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("Mittag-Leffler evaluation did not converge for alpha={alpha}, beta={beta}, z={z}")]
    NonConvergence { alpha: f64, beta: f64, z: f64 },

    #[error("direction is not admissible: {0}")]
    Inadmissible(String),

    #[error("divergent integral: {0}")]
    Divergent(String),

    #[error("non-finite state on path {path} at step {step}")]
    NonFinite { path: usize, step: usize },

    #[error("missing analytic derivative: {0}")]
    MissingDerivative(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
