use thiserror::Error;

/// Errors raised by the numerical routines of this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid dimension N = {0}: supported range is 4..=16")]
    InvalidDimension(usize),
    #[error("order s = {s} is outside the admissible window ({s_min}, 1) for N = {n}")]
    Inadmissible { n: usize, s: f64, s_min: f64 },
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("tower configuration has no bubbles (m = 0)")]
    EmptyConfiguration,
    #[error("index {what} = {index} out of range {range}")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        range: String,
    },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("non-finite function sample at {0}")]
    NonFinite(String),
    #[error("extrapolation of the boundary limit did not converge: {0}")]
    Extrapolation(String),
    #[error("degenerate critical point: |det H| = {0:e}")]
    DegenerateCriticalPoint(f64),
    #[error("degenerate pair: the two centers coincide")]
    DegeneratePair,
    #[error("eps = {0:e} is too large: the bubble count would be zero")]
    EpsTooLarge(f64),
    #[error("polar singularity: |y'| = 0 where the chain rule through r = |y'| is undefined")]
    PolarSingularity,
    #[error("empty sample grid")]
    EmptyGrid,
    #[error("quadrature did not converge: {0}")]
    Convergence(String),
    #[error("fit quality too low: {0}")]
    FitQuality(String),
    #[error("finite-difference step too small relative to noise: {0}")]
    StepSize(String),
    #[error("no root found: {0}")]
    NoRoot(String),
    #[error("closed-form root t = {t_cf} lies outside the search window [{lo}, {hi}]; adjust L0/L1")]
    Window { t_cf: f64, lo: f64, hi: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
