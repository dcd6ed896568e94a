//! Ground truth for the stochastic solver: the closed-form bivariate
//! Gaussian allocation under the exponential loss, and a Monte Carlo
//! benchmark minimized by Nelder–Mead.

mod benchmark;
mod gaussian;
pub mod reference;

pub use benchmark::{
    mc_benchmark, mc_benchmark_on, nelder_mead_min, saa_objective, BenchResult, NelderMeadOptions,
};
pub use gaussian::{
    entropic_univariate, oracle_allocation, solve_sc, GaussianExpCase, OracleAllocation,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("closed form not applicable: {0}")]
    NotApplicable(String),
    #[error("invalid case: {0}")]
    InvalidCase(String),
    #[error("sample set is empty")]
    EmptySamples,
    #[error("objective is not finite at the starting simplex")]
    NonFiniteObjective,
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
}
