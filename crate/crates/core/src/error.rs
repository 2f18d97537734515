use thiserror::Error;

/// Errors produced by the credibility toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{what} = {value} is outside the open unit interval")]
    Domain { what: &'static str, value: f64 },

    #[error("moment of order {order} does not exist for {model}")]
    MomentNotFinite { order: u32, model: String },

    #[error("endpoint term diverges for {model} at {side} proportion 0")]
    DivergentEndpoint { model: String, side: &'static str },

    #[error("retained window is empty (n = {n}, p = {p}, q = {q})")]
    EmptyWindow { n: usize, p: f64, q: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("{0} is undefined")]
    Undefined(String),

    #[error("{what} did not converge: best estimate {estimate:e}, error bound {error_bound:e}")]
    NonConvergence {
        what: &'static str,
        estimate: f64,
        error_bound: f64,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
