use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: state has {state} sites, mask has {mask}")]
    DimensionMismatch { state: usize, mask: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("{method} did not converge after {iterations} iterations")]
    NoConvergence { method: &'static str, iterations: usize },

    #[error("curve maximum lies at the grid endpoint W = {w}; extend the grid")]
    EndpointMaximum { w: f64 },

    #[error("curve never reaches epsilon = {epsilon}")]
    ThresholdNotReached { epsilon: f64 },

    #[error("{path}: {message}")]
    Io { path: String, message: String },

    #[error("{path}, line {line}: {reason}")]
    Format { path: String, line: usize, reason: String },

    #[error("realization {index} failed: {source}")]
    Realization {
        index: usize,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
