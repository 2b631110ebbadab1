use thiserror::Error;

/// Errors raised by the core library.
///
/// The variants map onto the process exit codes used by the command-line
/// runner: domain and configuration problems are caller mistakes, numeric
/// failures come from solvers, and resource errors mean a size cap was hit.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("resource error: {0}")]
    Resource(String),

    #[error("numeric error: {message} (best residual {best_residual:e})")]
    Numeric { message: String, best_residual: f64 },

    /// The energy lies in (or numerically on) the spectrum, so the resolvent
    /// is undefined there.
    #[error("spectral collision at E = {energy}: distance to spectrum {distance:e}")]
    SpectralCollision { energy: f64, distance: f64 },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn resource(msg: impl Into<String>) -> Self {
        Error::Resource(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>, best_residual: f64) -> Self {
        Error::Numeric {
            message: msg.into(),
            best_residual,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
