//! EM estimation of MNIG parameters.

mod bessel;
mod em;
mod gig;

pub use bessel::{bessel_k, bessel_k_scaled, bessel_k_scaled_seq, BesselError};
pub use em::{
    em_fit, em_fit_multistart, em_step, moment_initial_guess, EmConfig, EmResult, EmTraceEntry,
};
pub use gig::{gig_conditional_moments, log_likelihood, GigMoments};

use thiserror::Error;

use crate::scenarios::ScenarioError;

#[derive(Debug, Error)]
pub enum EmError {
    #[error("degenerate E-step: mean(phi) - 1/mean(zeta) = {0} is not positive")]
    DegenerateStep(f64),
    #[error("weighted scatter matrix is not positive definite (det = {0})")]
    NonPdScatter(f64),
    #[error("gamma is singular")]
    SingularGamma,
    #[error("data has dimension {actual}, parameters have dimension {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("need more observations than dimensions, got {rows} rows for d = {dim}")]
    TooFewObservations { rows: usize, dim: usize },
    #[error("invalid EM configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Bessel(#[from] BesselError),
    #[error(transparent)]
    Params(#[from] ScenarioError),
}
