use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("mass must be positive and finite, got {0}")]
    InvalidMass(f64),
    #[error("radius {r} is not outside the horizon at {horizon}")]
    InsideHorizon { r: f64, horizon: f64 },
    #[error("inverse tortoise map did not converge for r* = {rstar} within {iterations} iterations")]
    NoConvergence { rstar: f64, iterations: usize },
    #[error("odd-parity modes need ell >= 1 and |m| <= ell, got ell = {ell}, m = {m}")]
    InvalidMode { ell: u32, m: i32 },
    #[error("the traceless tensor section is empty for ell = 1")]
    EmptyTensorSection,
    #[error("invalid grid: {0}")]
    InvalidGrid(&'static str),
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("field shape mismatch: {0}")]
    ShapeMismatch(&'static str),
    #[error("evolution became unstable at t = {t}: {reason}")]
    Instability { t: f64, reason: &'static str },
    #[error("insufficient data: {0}")]
    InsufficientData(&'static str),
    #[error("decay fit needs strictly positive samples")]
    NonPositiveData,
    #[error("probe radius {0} lies outside the grid")]
    ProbeOutsideGrid(f64),
}

pub type Result<T> = core::result::Result<T, Error>;
