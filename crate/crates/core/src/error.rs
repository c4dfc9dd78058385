use thiserror::Error;

/// Errors raised by field evaluation, path simulation and the estimators.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A point lies on (or within the hard floor of) the Coulomb singular set.
    #[error("point lies on the singular set (distance {distance:e} below floor {floor:e})")]
    Singularity { distance: f64, floor: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    /// A value outside the domain of a map, e.g. a nonpositive ground-state value.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    /// The Q-process left its Gronwall envelope.
    #[error("Gronwall bound violated at step {step}: |Q| = {norm:e} > {bound:e}")]
    Gronwall { step: usize, norm: f64, bound: f64 },

    #[error("path exploded at step {0} before its horizon")]
    Exploded(usize),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn parameter(name: &'static str, reason: impl Into<String>) -> Error {
    Error::Parameter { name, reason: reason.into() }
}

pub(crate) fn require_positive(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(parameter(name, format!("must be positive and finite, got {value}")))
    }
}
