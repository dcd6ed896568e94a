use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::OracleError;
use crate::losses::LossSpec;
use crate::scenarios::{RngStream, SampleMatrix, Sampler};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub m_star: Vec<f64>,
    pub risk: f64,
    pub evaluations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NelderMeadOptions {
    /// Stop once every vertex lies within `tol` of the best one.
    pub tol: f64,
    pub max_eval: usize,
    /// Offset of the initial simplex vertices along each axis.
    pub initial_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions {
            tol: 1e-8,
            max_eval: 20_000,
            initial_step: 0.05,
        }
    }
}

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

/// Derivative-free minimization by the Nelder–Mead simplex method.
/// Non-finite values after the start are treated as `+inf`.
pub fn nelder_mead_min<F>(
    objective: F,
    x0: &[f64],
    opts: &NelderMeadOptions,
) -> Result<BenchResult, OracleError>
where
    F: Fn(&[f64]) -> f64,
{
    let d = x0.len();
    if d == 0 {
        return Err(OracleError::InvalidCase("x0 must not be empty".into()));
    }
    let evals = std::cell::Cell::new(0usize);
    let f = |x: &[f64]| {
        evals.set(evals.get() + 1);
        let v = objective(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(d + 1);
    for k in 0..=d {
        let mut v = x0.to_vec();
        if k > 0 {
            v[k - 1] += opts.initial_step;
        }
        let fv = f(&v);
        if !fv.is_finite() {
            return Err(OracleError::NonFiniteObjective);
        }
        simplex.push((v, fv));
    }
    let mut converged = false;
    let mut centroid = vec![0.0; d];
    let point = |c: &[f64], w: &[f64], t: f64| -> Vec<f64> {
        c.iter().zip(w).map(|(ci, wi)| ci + t * (wi - ci)).collect()
    };
    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].0.clone();
        let diameter = simplex[1..]
            .iter()
            .map(|(v, _)| {
                v.iter()
                    .zip(&best)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if diameter < opts.tol {
            converged = true;
            break;
        }
        if evals.get() >= opts.max_eval {
            break;
        }
        centroid.iter_mut().for_each(|c| *c = 0.0);
        for (v, _) in &simplex[..d] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / d as f64;
            }
        }
        let (worst, f_worst) = simplex[d].clone();
        let f_best = simplex[0].1;
        let f_second = simplex[d - 1].1;

        let xr = point(&centroid, &worst, -REFLECT);
        let fr = f(&xr);
        if fr < f_best {
            let xe = point(&centroid, &worst, -EXPAND);
            let fe = f(&xe);
            simplex[d] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < f_second {
            simplex[d] = (xr, fr);
            continue;
        }
        let (xc, fc, accept) = if fr < f_worst {
            let xc = point(&centroid, &xr, CONTRACT);
            let fc = f(&xc);
            let ok = fc <= fr;
            (xc, fc, ok)
        } else {
            let xc = point(&centroid, &worst, CONTRACT);
            let fc = f(&xc);
            let ok = fc < f_worst;
            (xc, fc, ok)
        };
        if accept {
            simplex[d] = (xc, fc);
            continue;
        }
        for k in 1..=d {
            let v = point(&best, &simplex[k].0, SHRINK);
            let fv = f(&v);
            simplex[k] = (v, fv);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (m_star, risk) = simplex.swap_remove(0);
    Ok(BenchResult {
        m_star,
        risk,
        evaluations: evals.get(),
        converged,
    })
}

const CHUNK: usize = 4096;

/// Sample-average objective `sum(w) + mean_k l(-X_k - w)` on a frozen
/// sample. Chunk sums are reduced in a fixed order, so the value does not
/// depend on the number of threads.
pub fn saa_objective(spec: &LossSpec, samples: &SampleMatrix, w: &[f64]) -> f64 {
    let d = samples.dim();
    let partial: Vec<f64> = samples
        .as_slice()
        .par_chunks(CHUNK * d)
        .map(|chunk| {
            let mut y = vec![0.0; d];
            let mut s = 0.0;
            for x in chunk.chunks_exact(d) {
                for ((yi, xi), wi) in y.iter_mut().zip(x).zip(w) {
                    *yi = -xi - wi;
                }
                s += spec.value_unchecked(&y);
            }
            s
        })
        .collect();
    w.iter().sum::<f64>() + partial.iter().sum::<f64>() / samples.rows() as f64
}

/// Monte Carlo benchmark: draw `n_samples` scenarios once, then minimize
/// the sample-average objective with Nelder–Mead from `x0`.
pub fn mc_benchmark<S: Sampler + ?Sized>(
    spec: &LossSpec,
    model: &S,
    n_samples: usize,
    x0: &[f64],
    rng: &mut RngStream,
    opts: &NelderMeadOptions,
) -> Result<BenchResult, OracleError> {
    let d = spec.dim();
    if model.dim() != d || x0.len() != d {
        return Err(OracleError::DimensionMismatch {
            expected: d,
            actual: if model.dim() != d {
                model.dim()
            } else {
                x0.len()
            },
        });
    }
    if n_samples == 0 {
        return Err(OracleError::EmptySamples);
    }
    let samples = model.sample(rng, n_samples);
    mc_benchmark_on(spec, &samples, x0, opts)
}

/// [`mc_benchmark`] on an already drawn sample.
pub fn mc_benchmark_on(
    spec: &LossSpec,
    samples: &SampleMatrix,
    x0: &[f64],
    opts: &NelderMeadOptions,
) -> Result<BenchResult, OracleError> {
    if samples.is_empty() {
        return Err(OracleError::EmptySamples);
    }
    if samples.dim() != spec.dim() {
        return Err(OracleError::DimensionMismatch {
            expected: spec.dim(),
            actual: samples.dim(),
        });
    }
    nelder_mead_min(|w| saa_objective(spec, samples, w), x0, opts)
}
