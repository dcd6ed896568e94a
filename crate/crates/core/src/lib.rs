//! Multivariate optimized certainty equivalent risk measures.
//!
//! The risk of a vector of portfolio losses `X` under a multivariate loss `l`
//! is `R(X) = inf_w { sum(w) + E[l(-X - w)] }` and the minimizer is the risk
//! allocation. This crate estimates both by projected stochastic
//! approximation, checks them against closed forms and Monte Carlo, and fits
//! the MNIG scenario law by EM.

// `!(x > 0.0)` style checks are deliberate: they reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod losses;
pub mod mnig_em;
pub mod oracle_bench;
pub mod sa_engine;
pub mod scenarios;
pub mod sensitivity;
