use thiserror::Error;

/// Errors produced by the engine, the oracle, the simulator and the fitter.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("moment order {order} exceeds the supported maximum {max}")]
    UnsupportedOrder { order: usize, max: usize },

    #[error("Fock truncation error {epsilon:.3e} exceeds bound {bound:.3e} (cutoff {cutoff})")]
    Truncation { epsilon: f64, bound: f64, cutoff: usize },

    #[error("degree of polarization is undefined: {0}")]
    UndefinedDp(String),

    #[error("insufficient pulses: need at least {needed}, got {got}")]
    InsufficientPulses { needed: usize, got: usize },

    #[error("parameters are not identifiable from the supplied data: {0}")]
    Unidentifiable(String),

    #[error("{0}")]
    Io(String),

    #[error("{path}:{line}: {message}")]
    Config { path: String, line: usize, message: String },

    #[error("{path}: row {row}: {message}")]
    Parse { path: String, row: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
