use nalgebra::DMatrix;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::schedule::{BoxConstraint, StepSchedule};
use super::SaError;
use crate::losses::{LossFamily, LossSpec};
use crate::scenarios::{RngStream, SampleMatrix, Sampler};

/// `H_1(x, m) = grad l(-x - m) - 1`, checked version.
pub fn h1_sample(spec: &LossSpec, x: &[f64], m: &[f64]) -> Result<Vec<f64>, SaError> {
    let d = spec.dim();
    for len in [x.len(), m.len()] {
        if len != d {
            return Err(SaError::DimensionMismatch {
                expected: d,
                actual: len,
            });
        }
    }
    let mut y = vec![0.0; d];
    let mut out = vec![0.0; d];
    h1_into(spec, x, m, &mut y, &mut out);
    Ok(out)
}

#[inline]
fn h1_into(spec: &LossSpec, x: &[f64], m: &[f64], y: &mut [f64], out: &mut [f64]) {
    for ((yi, xi), mi) in y.iter_mut().zip(x).zip(m) {
        *yi = -xi - mi;
    }
    spec.gradient_unchecked(y, out);
    out.iter_mut().for_each(|g| *g -= 1.0);
}

/// `F(x, m) = sum(m) + l(-x - m)`, the integrand of the risk objective.
#[inline]
fn objective_sample(spec: &LossSpec, x: &[f64], m: &[f64], y: &mut [f64]) -> f64 {
    for ((yi, xi), mi) in y.iter_mut().zip(x).zip(m) {
        *yi = -xi - mi;
    }
    m.iter().sum::<f64>() + spec.value_unchecked(y)
}

/// One Robbins–Monro transition `m_prev -> m_next` driven by sample `x`.
#[derive(Debug)]
pub struct RmStep<'a> {
    pub n: usize,
    pub gamma_n: f64,
    pub x: &'a [f64],
    pub m_prev: &'a [f64],
    pub h1: &'a [f64],
    pub m_next: &'a [f64],
    pub projected: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RmSummary {
    pub m_last: Vec<f64>,
    pub iterations: usize,
    pub boundary_hits: usize,
}

fn check_inputs<S: Sampler + ?Sized>(
    spec: &LossSpec,
    model: &S,
    sched: &StepSchedule,
    bx: &BoxConstraint,
    m0: &[f64],
) -> Result<(), SaError> {
    sched.validate()?;
    bx.validate()?;
    let d = spec.dim();
    for len in [model.dim(), bx.dim(), m0.len()] {
        if len != d {
            return Err(SaError::DimensionMismatch {
                expected: d,
                actual: len,
            });
        }
    }
    if !bx.contains(m0) {
        return Err(SaError::StartOutsideBox(m0.to_vec()));
    }
    if spec.family() == LossFamily::Polynomial && spec.has_unit_exponent() {
        log::warn!("polynomial loss with a unit exponent is not strictly convex; the allocation may not be unique");
    }
    Ok(())
}

/// Projected Robbins–Monro recursion
/// `m_{n+1} = clamp_K(m_n + gamma_n H_1(X_{n+1}, m_n))`, handing every
/// transition to `observer` in order.
pub fn rm_solve<S, F>(
    spec: &LossSpec,
    model: &S,
    sched: &StepSchedule,
    bx: &BoxConstraint,
    m0: &[f64],
    rng: &mut RngStream,
    mut observer: F,
) -> Result<RmSummary, SaError>
where
    S: Sampler + ?Sized,
    F: FnMut(&RmStep),
{
    check_inputs(spec, model, sched, bx, m0)?;
    let d = spec.dim();
    let mut m = m0.to_vec();
    let mut next = vec![0.0; d];
    let mut x = vec![0.0; d];
    let mut y = vec![0.0; d];
    let mut h = vec![0.0; d];
    let mut hits = 0;
    for n in 0..sched.n_iter {
        model.sample_into(rng, &mut x);
        h1_into(spec, &x, &m, &mut y, &mut h);
        let g = sched.step(n);
        for j in 0..d {
            next[j] = m[j] + g * h[j];
        }
        let projected = bx.project(&mut next);
        hits += projected as usize;
        observer(&RmStep {
            n,
            gamma_n: g,
            x: &x,
            m_prev: &m,
            h1: &h,
            m_next: &next,
            projected,
        });
        std::mem::swap(&mut m, &mut next);
    }
    Ok(RmSummary {
        m_last: m,
        iterations: sched.n_iter,
        boundary_hits: hits,
    })
}

/// Full record of a run: iterates `m_0..m_n` and the samples
/// `X_1..X_n` that drove them.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub iterates: Vec<Vec<f64>>,
    pub samples: SampleMatrix,
    pub boundary_hits: usize,
}

pub fn rm_trajectory<S: Sampler + ?Sized>(
    spec: &LossSpec,
    model: &S,
    sched: &StepSchedule,
    bx: &BoxConstraint,
    m0: &[f64],
    rng: &mut RngStream,
) -> Result<Trajectory, SaError> {
    let d = spec.dim();
    let mut iterates = Vec::with_capacity(sched.n_iter + 1);
    iterates.push(m0.to_vec());
    let mut samples = SampleMatrix::with_capacity(d, sched.n_iter);
    let summary = rm_solve(spec, model, sched, bx, m0, rng, |s| {
        iterates.push(s.m_next.to_vec());
        samples
            .push_row(s.x)
            .expect("sample rows have the loss dimension");
    })?;
    Ok(Trajectory {
        iterates,
        samples,
        boundary_hits: summary.boundary_hits,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrAverage {
    pub m_bar: Vec<f64>,
    pub anchor: usize,
    pub window: usize,
    /// The window ran past the last available iterate and was cut short.
    pub truncated: bool,
}

/// Windowed average of the iterates over `[n, n + floor(t / gamma_n) - 1]`.
pub fn pr_average(
    iterates: &[Vec<f64>],
    sched: &StepSchedule,
    n: usize,
) -> Result<PrAverage, SaError> {
    if n >= iterates.len() {
        return Err(SaError::WindowOutOfRange {
            anchor: n,
            available: iterates.len(),
        });
    }
    let want = sched.window_len(n);
    let end = (n + want).min(iterates.len());
    let window = end - n;
    let d = iterates[n].len();
    let mut m_bar = vec![0.0; d];
    for m in &iterates[n..end] {
        for (a, v) in m_bar.iter_mut().zip(m) {
            *a += v;
        }
    }
    m_bar.iter_mut().for_each(|a| *a /= window as f64);
    Ok(PrAverage {
        m_bar,
        anchor: n,
        window,
        truncated: window < want,
    })
}

/// [`pr_average`] anchored so the window ends at the last iterate. When no
/// such window exists every iterate is averaged and the result is flagged
/// as truncated.
pub fn pr_average_final(iterates: &[Vec<f64>], sched: &StepSchedule) -> Result<PrAverage, SaError> {
    let last = iterates
        .len()
        .checked_sub(1)
        .ok_or(SaError::WindowOutOfRange {
            anchor: 0,
            available: 0,
        })?;
    pr_average(iterates, sched, sched.anchor(last).unwrap_or(0))
}

/// Number of leading transitions dropped from the plug-in estimators.
fn burn_in_count(n: usize, burn_in: f64) -> usize {
    ((n as f64) * burn_in).floor() as usize
}

/// Companion recursion `R_{n+1} = R_n - gamma_n (R_n - F(X_{n+1}, m_n))`
/// from `R_0 = 0`, run over a recorded trajectory.
pub fn companion_risk(
    spec: &LossSpec,
    iterates: &[Vec<f64>],
    samples: &SampleMatrix,
    sched: &StepSchedule,
) -> f64 {
    let mut y = vec![0.0; spec.dim()];
    let mut r = 0.0;
    for (n, x) in samples.iter_rows().enumerate() {
        let g = sched.step(n);
        r -= g * (r - objective_sample(spec, x, &iterates[n], &mut y));
    }
    r
}

struct CovarianceAcc {
    sum: DMatrix<f64>,
    count: usize,
}

impl CovarianceAcc {
    fn new(d: usize) -> Self {
        CovarianceAcc {
            sum: DMatrix::zeros(d, d),
            count: 0,
        }
    }

    #[inline]
    fn add(&mut self, h: &[f64]) {
        let d = h.len();
        for i in 0..d {
            for j in 0..=i {
                self.sum[(i, j)] += h[i] * h[j];
            }
        }
        self.count += 1;
    }

    fn finish(mut self) -> DMatrix<f64> {
        let d = self.sum.nrows();
        let c = self.count.max(1) as f64;
        for i in 0..d {
            for j in 0..=i {
                let v = self.sum[(i, j)] / c;
                self.sum[(i, j)] = v;
                self.sum[(j, i)] = v;
            }
        }
        self.sum
    }
}

struct JacobianAcc {
    sum: DMatrix<f64>,
    count: usize,
    eps: f64,
    shifted: Vec<f64>,
    y: Vec<f64>,
    h: Vec<f64>,
}

impl JacobianAcc {
    fn new(d: usize, eps: f64) -> Self {
        JacobianAcc {
            sum: DMatrix::zeros(d, d),
            count: 0,
            eps,
            shifted: vec![0.0; d],
            y: vec![0.0; d],
            h: vec![0.0; d],
        }
    }

    #[inline]
    fn add(&mut self, spec: &LossSpec, x: &[f64], m: &[f64], h_base: &[f64]) {
        let d = m.len();
        self.shifted.copy_from_slice(m);
        for j in 0..d {
            self.shifted[j] = m[j] + self.eps;
            h1_into(spec, x, &self.shifted, &mut self.y, &mut self.h);
            for i in 0..d {
                self.sum[(i, j)] += self.h[i] - h_base[i];
            }
            self.shifted[j] = m[j];
        }
        self.count += 1;
    }

    fn finish(self) -> DMatrix<f64> {
        self.sum / (self.eps * self.count.max(1) as f64)
    }
}

/// `Sigma_n`: average of `H_1 H_1'` over the recorded transitions after
/// discarding the first `burn_in` fraction.
pub fn covariance_estimator(
    spec: &LossSpec,
    iterates: &[Vec<f64>],
    samples: &SampleMatrix,
    burn_in: f64,
) -> DMatrix<f64> {
    let d = spec.dim();
    let skip = burn_in_count(samples.rows(), burn_in);
    let mut acc = CovarianceAcc::new(d);
    let mut y = vec![0.0; d];
    let mut h = vec![0.0; d];
    for (k, x) in samples.iter_rows().enumerate().skip(skip) {
        h1_into(spec, x, &iterates[k], &mut y, &mut h);
        acc.add(&h);
    }
    acc.finish()
}

/// `A_n^eps(i, j)`: forward difference of `H_1^i` in direction `e_j`,
/// averaged over the recorded transitions after the burn-in.
pub fn jacobian_estimator(
    spec: &LossSpec,
    iterates: &[Vec<f64>],
    samples: &SampleMatrix,
    eps: f64,
    burn_in: f64,
) -> Result<DMatrix<f64>, SaError> {
    if !(eps > 0.0) {
        return Err(SaError::InvalidOption(format!(
            "eps must be positive, got {eps}"
        )));
    }
    let d = spec.dim();
    let skip = burn_in_count(samples.rows(), burn_in);
    let mut acc = JacobianAcc::new(d, eps);
    let mut y = vec![0.0; d];
    let mut h = vec![0.0; d];
    for (k, x) in samples.iter_rows().enumerate().skip(skip) {
        h1_into(spec, x, &iterates[k], &mut y, &mut h);
        acc.add(spec, x, &iterates[k], &h);
    }
    Ok(acc.finish())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn half_width(&self) -> f64 {
        0.5 * (self.hi - self.lo)
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }
}

/// `m_bar_j +- q sqrt(V_jj gamma_n / t)` with `V = A^{-1} Sigma A^{-T}` and
/// `q` the two-sided standard normal quantile at `level`.
pub fn confidence_intervals(
    m_bar: &[f64],
    sigma_hat: &DMatrix<f64>,
    jac_hat: &DMatrix<f64>,
    sched: &StepSchedule,
    n: usize,
    level: f64,
) -> Result<Vec<Interval>, SaError> {
    if !(0.0..1.0).contains(&level) {
        return Err(SaError::InvalidOption(format!(
            "level must lie in [0, 1), got {level}"
        )));
    }
    if !(sched.gamma < 1.0) {
        return Err(SaError::InvalidSchedule(
            "confidence intervals need gamma < 1".into(),
        ));
    }
    let inv = jac_hat
        .clone()
        .try_inverse()
        .filter(|m| m.iter().all(|v| v.is_finite()))
        .ok_or(SaError::SingularJacobian)?;
    let v = &inv * sigma_hat * inv.transpose();
    let q = standard_normal_quantile(0.5 + level / 2.0);
    let scale = sched.step(n) / sched.t;
    Ok(m_bar
        .iter()
        .enumerate()
        .map(|(j, m)| {
            let hw = q * (v[(j, j)].max(0.0) * scale).sqrt();
            Interval {
                lo: m - hw,
                hi: m + hw,
            }
        })
        .collect())
}

fn standard_normal_quantile(p: f64) -> f64 {
    if p == 0.5 {
        return 0.0;
    }
    Normal::standard().inverse_cdf(p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorOptions {
    /// Confidence level of the reported intervals; `None` skips them.
    pub level: Option<f64>,
    /// Finite-difference step of the Jacobian estimator.
    pub eps: f64,
    /// Fraction of leading transitions ignored by the plug-in estimators.
    pub burn_in: f64,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        EstimatorOptions {
            level: Some(0.95),
            eps: 1e-6,
            burn_in: 0.1,
        }
    }
}

impl EstimatorOptions {
    pub fn validate(&self) -> Result<(), SaError> {
        if !(self.eps > 0.0) {
            return Err(SaError::InvalidOption(format!(
                "eps must be positive, got {}",
                self.eps
            )));
        }
        if !(0.0..1.0).contains(&self.burn_in) {
            return Err(SaError::InvalidOption(format!(
                "burn_in must lie in [0, 1), got {}",
                self.burn_in
            )));
        }
        if let Some(l) = self.level {
            if !(0.0..1.0).contains(&l) {
                return Err(SaError::InvalidOption(format!(
                    "level must lie in [0, 1), got {l}"
                )));
            }
        }
        Ok(())
    }
}

/// Everything one solver pass produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationEstimate {
    pub m_bar: Vec<f64>,
    pub m_last: Vec<f64>,
    /// Companion estimate `R_n` at the last step.
    pub risk: f64,
    /// Companion estimates averaged over the same window as `m_bar`.
    pub risk_averaged: f64,
    pub sigma_hat: Vec<Vec<f64>>,
    pub jac_hat: Vec<Vec<f64>>,
    pub ci: Option<Vec<Interval>>,
    pub ci_level: Option<f64>,
    pub iterations: usize,
    pub boundary_hits: usize,
    pub pr_anchor: usize,
    pub pr_window: usize,
    pub pr_truncated: bool,
}

impl AllocationEstimate {
    pub fn sigma_matrix(&self) -> DMatrix<f64> {
        to_matrix(&self.sigma_hat)
    }

    pub fn jac_matrix(&self) -> DMatrix<f64> {
        to_matrix(&self.jac_hat)
    }

    pub fn half_widths(&self) -> Option<Vec<f64>> {
        self.ci
            .as_ref()
            .map(|c| c.iter().map(Interval::half_width).collect())
    }
}

fn to_matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let d = rows.len();
    DMatrix::from_fn(d, d, |i, j| rows[i][j])
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Runs the recursion once and feeds the averaged allocation, companion
/// risk, `Sigma_n`, `A_n^eps` and confidence intervals from the same stream.
pub fn solve_full<S: Sampler + ?Sized>(
    spec: &LossSpec,
    model: &S,
    sched: &StepSchedule,
    bx: &BoxConstraint,
    m0: &[f64],
    rng: &mut RngStream,
    opts: &EstimatorOptions,
) -> Result<AllocationEstimate, SaError> {
    opts.validate()?;
    if opts.level.is_some() && !(sched.gamma < 1.0) {
        return Err(SaError::InvalidSchedule(
            "confidence intervals need gamma < 1".into(),
        ));
    }
    let d = spec.dim();
    let n_iter = sched.n_iter;
    let (anchor, truncated) = match sched.anchor(n_iter) {
        Some(a) => (a, false),
        None => (0, true),
    };
    let window_end = (anchor + sched.window_len(anchor)).min(n_iter + 1);
    let window = window_end - anchor;
    let skip = burn_in_count(n_iter, opts.burn_in);

    let mut m_sum = vec![0.0; d];
    let mut r_sum = 0.0;
    let mut r = 0.0;
    let mut y = vec![0.0; d];
    let mut cov = CovarianceAcc::new(d);
    let mut jac = JacobianAcc::new(d, opts.eps);
    if anchor == 0 {
        m_sum.copy_from_slice(m0);
        r_sum = r;
    }
    let summary = rm_solve(spec, model, sched, bx, m0, rng, |s| {
        r -= s.gamma_n * (r - objective_sample(spec, s.x, s.m_prev, &mut y));
        if s.n >= skip {
            cov.add(s.h1);
            jac.add(spec, s.x, s.m_prev, s.h1);
        }
        // m_next is iterate n + 1
        let idx = s.n + 1;
        if idx >= anchor && idx < window_end {
            for (a, v) in m_sum.iter_mut().zip(s.m_next) {
                *a += v;
            }
            r_sum += r;
        }
    })?;
    let m_bar: Vec<f64> = m_sum.iter().map(|v| v / window as f64).collect();
    let sigma = cov.finish();
    let a = jac.finish();
    let ci = match opts.level {
        Some(level) => Some(confidence_intervals(
            &m_bar, &sigma, &a, sched, anchor, level,
        )?),
        None => None,
    };
    Ok(AllocationEstimate {
        m_bar,
        m_last: summary.m_last,
        risk: r,
        risk_averaged: r_sum / window as f64,
        sigma_hat: to_rows(&sigma),
        jac_hat: to_rows(&a),
        ci,
        ci_level: opts.level,
        iterations: summary.iterations,
        boundary_hits: summary.boundary_hits,
        pr_anchor: anchor,
        pr_window: window,
        pr_truncated: truncated,
    })
}

/// Mean and standard error of `H_1(X, m)` over `n` fresh samples.
pub fn first_order_residual<S: Sampler + ?Sized>(
    spec: &LossSpec,
    model: &S,
    m: &[f64],
    n: usize,
    rng: &mut RngStream,
) -> (Vec<f64>, Vec<f64>) {
    let d = spec.dim();
    let mut x = vec![0.0; d];
    let mut y = vec![0.0; d];
    let mut h = vec![0.0; d];
    let mut s1 = vec![0.0; d];
    let mut s2 = vec![0.0; d];
    for _ in 0..n {
        model.sample_into(rng, &mut x);
        h1_into(spec, &x, m, &mut y, &mut h);
        for j in 0..d {
            s1[j] += h[j];
            s2[j] += h[j] * h[j];
        }
    }
    let nf = n as f64;
    let mean: Vec<f64> = s1.iter().map(|s| s / nf).collect();
    let se = s2
        .iter()
        .zip(&mean)
        .map(|(s, m)| ((s / nf - m * m).max(0.0) / nf).sqrt())
        .collect();
    (mean, se)
}

/// Independent seed for repetition `k` of a seeded experiment.
pub fn derived_seed(seed: u64, k: u64) -> u64 {
    let mut r = RngStream::new(seed).substream(k);
    r.random()
}
