use thiserror::Error;

use crate::integrator::IntegrationError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error(
        "no QSSA root: input I = {input} is not below the hydrolysis ceiling 1 with kappa = 0"
    )]
    NoRoot { input: f64 },
    #[error(
        "approximation discriminant {discriminant} is negative (I = {input}, kappa = {kappa})"
    )]
    NonRealDiscriminant {
        input: f64,
        kappa: f64,
        discriminant: f64,
    },
    #[error(
        "decay envelope not certified: q0 = {q0} exceeds the nullcline level {q_max} at s_max"
    )]
    EnvelopeNotCertified { q0: f64, q_max: f64 },
    #[error("event `{0}` did not fire before t_end")]
    MissingEvent(String),
    #[error("degenerate step: {0}")]
    DegenerateStep(String),
    #[error(transparent)]
    Integration(#[from] IntegrationError),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
