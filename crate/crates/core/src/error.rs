use thiserror::Error;

/// Errors raised by the solver stack.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{name} = {value} violates {constraint}")]
    Domain { name: &'static str, value: f64, constraint: &'static str },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("singular strategy transform: {0}")]
    SingularTransform(&'static str),
    #[error("no sign change found for {what} on [{lo:e}, {hi:e}]")]
    BracketNotFound { what: &'static str, lo: f64, hi: f64 },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("case classifier invariant violated: {0}")]
    Invariant(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(name: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Domain { name, value, constraint: "finite" })
    }
}

pub(crate) fn ensure_positive(name: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(Error::Domain { name, value, constraint: "finite and > 0" })
    }
}
