use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::bessel::bessel_k_scaled_seq;
use super::EmError;
use crate::scenarios::{MnigParams, SampleMatrix};

/// Smallest `q(x)` used in the Bessel ratios. `q = 0` only happens when an
/// initial guess has `delta = 0` and a row sits exactly at `mu`.
const Q_FLOOR: f64 = 1e-12;

/// Conditional moments of the mixing variable given each observation:
/// `zeta_i = E[Z | X_i]`, `phi_i = E[1/Z | X_i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GigMoments {
    pub zeta: Vec<f64>,
    pub phi: Vec<f64>,
}

impl GigMoments {
    pub fn zeta_mean(&self) -> f64 {
        self.zeta.iter().sum::<f64>() / self.zeta.len() as f64
    }

    pub fn phi_mean(&self) -> f64 {
        self.phi.iter().sum::<f64>() / self.phi.len() as f64
    }
}

/// `q(x) = sqrt(delta^2 + (x - mu)' Gamma^{-1} (x - mu))` for every row.
pub(crate) fn q_values(params: &MnigParams, data: &SampleMatrix) -> Result<Vec<f64>, EmError> {
    let d = params.dim();
    if data.dim() != d {
        return Err(EmError::DimensionMismatch {
            expected: d,
            actual: data.dim(),
        });
    }
    let chol = params
        .gamma()
        .clone()
        .cholesky()
        .ok_or(EmError::SingularGamma)?;
    let l = chol.l();
    let delta2 = params.delta() * params.delta();
    let mu = params.mu();
    let rows: Vec<&[f64]> = data.iter_rows().collect();
    Ok(rows
        .par_iter()
        .map(|r| {
            let diff = DVector::from_iterator(d, r.iter().zip(mu.iter()).map(|(x, m)| x - m));
            let y = l
                .solve_lower_triangular(&diff)
                .expect("Cholesky factor is invertible");
            (delta2 + y.norm_squared()).sqrt()
        })
        .collect())
}

/// E-step: `Z | X ~ GIG(-(d+1)/2, q(X)^2, alpha^2)`, so
/// `zeta = (q/alpha) K_{(d-1)/2}(alpha q) / K_{(d+1)/2}(alpha q)` and
/// `phi = (alpha/q) K_{(d+3)/2}(alpha q) / K_{(d+1)/2}(alpha q)`.
pub fn gig_conditional_moments(
    params: &MnigParams,
    data: &SampleMatrix,
) -> Result<GigMoments, EmError> {
    let q = q_values(params, data)?;
    let d = params.dim() as f64;
    let alpha = params.alpha();
    let v0 = (d - 1.0) / 2.0;
    let pairs: Result<Vec<(f64, f64)>, EmError> = q
        .par_iter()
        .map(|&q| {
            let q = q.max(Q_FLOOR);
            let k = bessel_k_scaled_seq(v0, alpha * q, 3)?;
            Ok((q / alpha * k[0] / k[1], alpha / q * k[2] / k[1]))
        })
        .collect();
    let (zeta, phi) = pairs?.into_iter().unzip();
    Ok(GigMoments { zeta, phi })
}

/// MNIG log-density at every row, allowing `det(Gamma) != 1`.
pub(crate) fn log_density(params: &MnigParams, data: &SampleMatrix) -> Result<Vec<f64>, EmError> {
    let q = q_values(params, data)?;
    let d = params.dim() as f64;
    let alpha = params.alpha();
    let delta = params.delta();
    let mu = params.mu();
    let beta = params.beta();
    let log_det = params.gamma().determinant().ln();
    let v = (d + 1.0) / 2.0;
    let constant = delta.ln() - (d - 1.0) / 2.0 * std::f64::consts::LN_2
        + delta * params.psi().sqrt()
        - 0.5 * log_det;
    data.iter_rows()
        .zip(q)
        .map(|(r, q)| {
            let q = q.max(Q_FLOOR);
            let k = bessel_k_scaled_seq(v, alpha * q, 1)?[0];
            let lin: f64 = r
                .iter()
                .zip(mu.iter())
                .zip(beta.iter())
                .map(|((x, m), b)| b * (x - m))
                .sum();
            Ok(constant + v * (alpha / (std::f64::consts::PI * q)).ln() + lin + k.ln() - alpha * q)
        })
        .collect()
}

pub fn log_likelihood(params: &MnigParams, data: &SampleMatrix) -> Result<f64, EmError> {
    Ok(log_density(params, data)?.iter().sum())
}

/// `Gamma^{-1}` as a dense matrix; used by the M-step.
pub(crate) fn inverse(gamma: &DMatrix<f64>) -> Result<DMatrix<f64>, EmError> {
    gamma
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or(EmError::SingularGamma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mnig_em::bessel::bessel_k;
    use crate::scenarios::{MnigModel, RngStream, Sampler};

    fn params_1d(alpha: f64, beta: f64, delta: f64, mu: f64) -> MnigParams {
        MnigParams::new(
            alpha,
            vec![beta],
            delta,
            vec![mu],
            DMatrix::from_element(1, 1, 1.0),
        )
        .unwrap()
    }

    fn params_2d() -> MnigParams {
        MnigParams::normalized(
            2.0,
            vec![0.5, -0.3],
            1.5,
            vec![1.0, -0.5],
            DMatrix::from_row_slice(2, 2, &[1.25, 0.5, 0.5, 1.0]),
        )
        .unwrap()
    }

    /// Log of the unnormalized GIG(lambda, chi, psi) density.
    fn gig_log_kernel(z: f64, lambda: f64, chi: f64, psi: f64) -> f64 {
        (lambda - 1.0) * z.ln() - 0.5 * (chi / z + psi * z)
    }

    /// `(E[Z], E[1/Z])` under GIG by quadrature in `u = ln z` with the
    /// trapezoid rule, which is spectrally accurate for this smooth,
    /// doubly exponentially decaying integrand.
    fn gig_moments_quadrature(lambda: f64, chi: f64, psi: f64) -> (f64, f64) {
        let mode = ((lambda - 1.0) + ((lambda - 1.0).powi(2) + chi * psi).sqrt()) / psi;
        let centre = mode.ln();
        let peak = gig_log_kernel(mode, lambda, chi, psi) + centre;
        let h = 1e-3;
        let (mut m0, mut m1, mut mm1) = (0.0, 0.0, 0.0);
        for k in -60_000i64..=60_000 {
            let u = centre + k as f64 * h;
            let z = u.exp();
            let w = (gig_log_kernel(z, lambda, chi, psi) + u - peak).exp();
            m0 += w;
            m1 += w * z;
            mm1 += w / z;
        }
        (m1 / m0, mm1 / m0)
    }

    #[test]
    fn one_dimensional_row_at_mu() {
        let p = params_1d(2.0, 0.3, 0.7, 0.1);
        let data = SampleMatrix::from_rows(&[vec![0.1]]).unwrap();
        let g = gig_conditional_moments(&p, &data).unwrap();
        let expected = 0.7 / 2.0 * bessel_k(0.0, 1.4).unwrap() / bessel_k(1.0, 1.4).unwrap();
        assert!((g.zeta[0] - expected).abs() < 1e-14 * expected);
    }

    #[test]
    fn moments_match_quadrature() {
        let p = params_2d();
        let data = SampleMatrix::from_rows(&[
            vec![0.0, 0.0],
            vec![1.0, -0.5],
            vec![4.0, 3.0],
            vec![-2.5, 1.0],
        ])
        .unwrap();
        let g = gig_conditional_moments(&p, &data).unwrap();
        let q = q_values(&p, &data).unwrap();
        let alpha = p.alpha();
        for i in 0..q.len() {
            let (ez, einv) = gig_moments_quadrature(-1.5, q[i] * q[i], alpha * alpha);
            assert!(
                ((g.zeta[i] - ez) / ez).abs() < 1e-6,
                "row {i}: {} vs {ez}",
                g.zeta[i]
            );
            assert!(
                ((g.phi[i] - einv) / einv).abs() < 1e-6,
                "row {i}: {} vs {einv}",
                g.phi[i]
            );
        }
    }

    #[test]
    fn jensen_holds_on_sampled_rows() {
        let p = params_2d();
        let data = MnigModel::new(p.clone())
            .unwrap()
            .sample(&mut RngStream::new(4), 2000);
        let g = gig_conditional_moments(&p, &data).unwrap();
        for (z, f) in g.zeta.iter().zip(&g.phi) {
            assert!(*z > 0.0 && *f > 0.0);
            assert!(z * f >= 1.0 - 1e-12);
        }
    }

    #[test]
    fn zero_delta_initial_guess_is_finite() {
        let p = MnigParams::initial_guess(1.0, vec![0.0], 0.0, vec![0.0], DMatrix::identity(1, 1))
            .unwrap();
        let data = SampleMatrix::from_rows(&[vec![0.0], vec![0.5]]).unwrap();
        let g = gig_conditional_moments(&p, &data).unwrap();
        assert!(g
            .zeta
            .iter()
            .chain(&g.phi)
            .all(|v| v.is_finite() && *v > 0.0));
    }

    #[test]
    fn density_integrates_to_one() {
        let p = params_1d(1.7, 0.6, 0.9, -0.2);
        let h = 1e-3;
        let xs: Vec<Vec<f64>> = (-40_000..=40_000).map(|k| vec![k as f64 * h]).collect();
        let data = SampleMatrix::from_rows(&xs).unwrap();
        let total: f64 = log_density(&p, &data)
            .unwrap()
            .iter()
            .map(|l| l.exp())
            .sum::<f64>()
            * h;
        assert!((total - 1.0).abs() < 1e-8, "{total}");
    }
}
