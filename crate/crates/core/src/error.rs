use thiserror::Error;

/// Errors raised by the numerical routines in this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An input violated a documented precondition.
    #[error("domain error: {0}")]
    Domain(String),

    /// Shapes of vectors or matrices do not agree.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// An iterative routine hit its iteration cap.
    #[error("no convergence after {iterations} iterations (last duality gap {gap:e})")]
    NoConvergence { iterations: usize, gap: f64 },

    /// The oracle was undefined at every retried sample point.
    #[error("gradient undefined at all {retries} retries near sample {index}")]
    UndefinedOracle { index: usize, retries: usize },

    /// A certificate that a routine depends on could not be produced.
    #[error("{0}")]
    MissingCertificate(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
