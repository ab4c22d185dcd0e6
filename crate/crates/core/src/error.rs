use thiserror::Error;

/// Errors raised by the numerical kernels.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite integrand value {value} at node {node}")]
    NonFinite { node: f64, value: f64 },

    #[error(
        "no convergence after {iterations} iterations (last iterate {last}, residual {residual})"
    )]
    Convergence {
        iterations: usize,
        last: f64,
        residual: f64,
    },

    #[error("Gram-Schmidt degeneracy at step {step}: residual norm {norm:e}")]
    Degeneracy { step: usize, norm: f64 },

    #[error("capability exceeded: {0}")]
    Capability(String),

    #[error("root not bracketed on [{lo}, {hi}]: f(lo) = {f_lo}, f(hi) = {f_hi}")]
    Bracketing {
        lo: f64,
        hi: f64,
        f_lo: f64,
        f_hi: f64,
    },

    #[error("consistency check failed: {0}")]
    Consistency(String),

    #[error("i/o: {0}")]
    Io(String),

    #[error("format: {0}")]
    Format(String),
}

impl Error {
    /// True for errors caused by the caller's inputs rather than by a module
    /// refusing or failing the computation.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::InvalidArgument(_))
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
