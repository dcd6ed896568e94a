use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::gig::{gig_conditional_moments, inverse, log_likelihood};
use super::EmError;
use crate::scenarios::{MnigParams, RngStream, SampleMatrix};

#[derive(Debug, Clone)]
pub struct EmConfig {
    /// Starting point. `beta` is carried along but does not enter the first
    /// E-step.
    pub initial: MnigParams,
    pub tol: f64,
    pub max_iter: usize,
    /// Record the sample log-likelihood after every step.
    pub track_log_likelihood: bool,
}

impl EmConfig {
    pub fn new(initial: MnigParams, tol: f64, max_iter: usize) -> Self {
        EmConfig {
            initial,
            tol,
            max_iter,
            track_log_likelihood: false,
        }
    }

    pub fn validate(&self) -> Result<(), EmError> {
        if !(self.tol > 0.0) {
            return Err(EmError::InvalidConfig(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if self.max_iter == 0 {
            return Err(EmError::InvalidConfig("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EmTraceEntry {
    pub iteration: usize,
    pub step_norm: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub log_likelihood: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EmResult {
    pub params: MnigParams,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<EmTraceEntry>,
}

/// One EM iteration: conditional moments of the mixing variable, then the
/// closed-form maximization in the order `delta, mu, Gamma beta, Gamma,
/// beta, alpha`.
pub fn em_step(params: &MnigParams, data: &SampleMatrix) -> Result<MnigParams, EmError> {
    let d = params.dim();
    let n = data.rows();
    if n <= d {
        return Err(EmError::TooFewObservations { rows: n, dim: d });
    }
    let g = gig_conditional_moments(params, data)?;
    let nf = n as f64;
    let zeta_bar = g.zeta_mean();
    let phi_bar = g.phi_mean();
    let mut x_bar = DVector::zeros(d);
    let mut x_phi = DVector::zeros(d);
    for (r, &phi) in data.iter_rows().zip(&g.phi) {
        for j in 0..d {
            x_bar[j] += r[j];
            x_phi[j] += phi * r[j];
        }
    }
    x_bar /= nf;
    x_phi /= nf;

    let spread = phi_bar - 1.0 / zeta_bar;
    let denom = 1.0 - zeta_bar * phi_bar;
    if !(spread > 0.0) || !(denom < 0.0) {
        return Err(EmError::DegenerateStep(spread));
    }
    let delta = 1.0 / spread.sqrt();
    let mu = (&x_bar - &x_phi * zeta_bar) / denom;
    let gamma_beta = &x_phi - &mu * phi_bar;

    let mut r = DMatrix::zeros(d, d);
    let mut diff = DVector::zeros(d);
    for (row, &phi) in data.iter_rows().zip(&g.phi) {
        for j in 0..d {
            diff[j] = row[j] - mu[j];
        }
        r.syger(phi / nf, &diff, &diff, 1.0);
    }
    r.syger(-zeta_bar, &gamma_beta, &gamma_beta, 1.0);
    r.fill_upper_triangle_with_lower_triangle();
    let det = r.determinant();
    if !(det > 0.0) || r.clone().cholesky().is_none() {
        return Err(EmError::NonPdScatter(det));
    }
    let gamma = r / det.powf(1.0 / d as f64);
    let beta = inverse(&gamma)? * &gamma_beta;
    let bgb = beta.dot(&(&gamma * &beta));
    let alpha = (delta * delta / (zeta_bar * zeta_bar) + bgb).sqrt();

    Ok(MnigParams::new(
        alpha,
        beta.iter().copied().collect(),
        delta,
        mu.iter().copied().collect(),
        gamma,
    )?)
}

/// Iterates [`em_step`] until the Euclidean step over the flattened
/// `(delta, mu, beta, vec Gamma, alpha)` falls below `tol` or `max_iter`
/// steps have run.
pub fn em_fit(config: &EmConfig, data: &SampleMatrix) -> Result<EmResult, EmError> {
    config.validate()?;
    let mut params = config.initial.clone();
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_iter {
        let next = em_step(&params, data)?;
        let step_norm = next.distance(&params);
        iterations += 1;
        let log_likelihood = if config.track_log_likelihood {
            Some(log_likelihood(&next, data)?)
        } else {
            None
        };
        trace.push(EmTraceEntry {
            iteration: iterations,
            step_norm,
            log_likelihood,
        });
        params = next;
        if step_norm < config.tol {
            converged = true;
            break;
        }
    }
    log::debug!("EM finished after {iterations} iterations, converged = {converged}");
    Ok(EmResult {
        params,
        iterations,
        converged,
        trace,
    })
}

/// Moment-based starting point: `mu` is the sample mean, `Gamma` the
/// normalized sample covariance, `beta = 0`, and `alpha`, `delta` set so that
/// `(delta / alpha) Gamma` reproduces the covariance.
pub fn moment_initial_guess(data: &SampleMatrix) -> Result<MnigParams, EmError> {
    let d = data.dim();
    if data.rows() <= d {
        return Err(EmError::TooFewObservations {
            rows: data.rows(),
            dim: d,
        });
    }
    let cov = data.covariance();
    let det = cov.determinant();
    if !(det > 0.0) {
        return Err(EmError::NonPdScatter(det));
    }
    let scale = det.powf(1.0 / d as f64);
    let gamma = cov / scale;
    let s = scale.sqrt();
    Ok(MnigParams::new(
        1.0 / s,
        vec![0.0; d],
        s,
        data.column_means(),
        gamma,
    )?)
}

/// Runs [`em_fit`] from the configured start and from `restarts` random
/// perturbations of it, returning the fit with the highest log-likelihood.
/// Converged fits are preferred over non-converged ones.
pub fn em_fit_multistart(
    config: &EmConfig,
    data: &SampleMatrix,
    restarts: usize,
    rng: &mut RngStream,
) -> Result<EmResult, EmError> {
    let mut best: Option<(bool, f64, EmResult)> = None;
    for k in 0..=restarts {
        let start = if k == 0 {
            config.initial.clone()
        } else {
            perturb(&config.initial, data, rng)?
        };
        let cfg = EmConfig {
            initial: start,
            ..config.clone()
        };
        let fit = match em_fit(&cfg, data) {
            Ok(f) => f,
            Err(e) if k > 0 => {
                log::warn!("EM restart {k} failed: {e}");
                continue;
            }
            Err(e) => return Err(e),
        };
        let ll = log_likelihood(&fit.params, data)?;
        log::info!(
            "EM start {k}: log-likelihood {ll}, iterations {}",
            fit.iterations
        );
        let better = match &best {
            None => true,
            Some((c, l, _)) => (fit.converged, ll) > (*c, *l),
        };
        if better {
            best = Some((fit.converged, ll, fit));
        }
    }
    Ok(best.expect("the unperturbed start always yields a fit").2)
}

fn perturb(
    p: &MnigParams,
    data: &SampleMatrix,
    rng: &mut RngStream,
) -> Result<MnigParams, EmError> {
    let sd: Vec<f64> = {
        let cov = data.covariance();
        (0..p.dim()).map(|j| cov[(j, j)].sqrt()).collect()
    };
    let mu: Vec<f64> = p
        .mu()
        .iter()
        .zip(&sd)
        .map(|(m, s)| m + 0.1 * s * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let delta = p.delta().max(1e-3 * sd[0]) * rng.random_range(0.5..1.5);
    let alpha = p.alpha() * rng.random_range(0.5..2.0);
    Ok(MnigParams::initial_guess(
        alpha,
        vec![0.0; p.dim()],
        delta,
        mu,
        p.gamma().clone(),
    )?)
}
