//! Projected stochastic approximation of the risk allocation with
//! windowed averaging, a companion risk estimate and asymptotic
//! confidence intervals.

mod schedule;
mod solver;

pub use schedule::{BoxConstraint, StepSchedule};
pub use solver::{
    companion_risk, confidence_intervals, covariance_estimator, derived_seed, first_order_residual,
    h1_sample, jacobian_estimator, pr_average, pr_average_final, rm_solve, rm_trajectory,
    solve_full, AllocationEstimate, EstimatorOptions, Interval, PrAverage, RmStep, RmSummary,
    Trajectory,
};

use thiserror::Error;

use crate::losses::LossError;

#[derive(Debug, Error)]
pub enum SaError {
    #[error("invalid step schedule: {0}")]
    InvalidSchedule(String),
    #[error("invalid box: {0}")]
    InvalidBox(String),
    #[error("invalid estimator option: {0}")]
    InvalidOption(String),
    #[error("starting point {0:?} lies outside the box")]
    StartOutsideBox(Vec<f64>),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("averaging window anchored at {anchor} but only {available} iterates exist")]
    WindowOutOfRange { anchor: usize, available: usize },
    #[error("Jacobian estimate is singular; confidence intervals are undefined")]
    SingularJacobian,
    #[error(transparent)]
    Loss(#[from] LossError),
}
