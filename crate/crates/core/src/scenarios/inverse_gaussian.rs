use rand::Rng;
use rand_distr::{Open01, StandardNormal};

use super::{RngStream, ScenarioError};

/// Inverse Gaussian law `IG(chi, psi)` with density proportional to
/// `z^{-3/2} exp(-(chi / z + psi z) / 2)`.
///
/// In the mean/shape parameterization this is `mean = sqrt(chi / psi)` and
/// `shape = chi`. Draws use the transformation-with-rejection method of
/// Michael, Schucany and Haas.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InverseGaussian {
    mean: f64,
    shape: f64,
}

impl InverseGaussian {
    pub fn new(chi: f64, psi: f64) -> Result<Self, ScenarioError> {
        if !(chi > 0.0 && psi > 0.0 && chi.is_finite() && psi.is_finite()) {
            return Err(ScenarioError::InvalidInverseGaussian { chi, psi });
        }
        Ok(InverseGaussian {
            mean: (chi / psi).sqrt(),
            shape: chi,
        })
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        self.mean.powi(3) / self.shape
    }

    #[inline]
    pub fn sample(&self, rng: &mut RngStream) -> f64 {
        let mu = self.mean;
        let v: f64 = rng.sample(StandardNormal);
        let r = mu * v * v / (2.0 * self.shape);
        // smaller root of the quadratic, rewritten to avoid cancellation
        let x = mu / (1.0 + r + (r * (r + 2.0)).sqrt());
        let u: f64 = rng.sample(Open01);
        if u <= mu / (mu + x) {
            x
        } else {
            mu * mu / x
        }
    }
}

pub fn sample_ig(
    chi: f64,
    psi: f64,
    rng: &mut RngStream,
    n: usize,
) -> Result<Vec<f64>, ScenarioError> {
    let ig = InverseGaussian::new(chi, psi)?;
    Ok((0..n).map(|_| ig.sample(rng)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check_mean(chi: f64, psi: f64, seed: u64) {
        let n = 1_000_000;
        let ig = InverseGaussian::new(chi, psi).unwrap();
        let xs = sample_ig(chi, psi, &mut RngStream::new(seed), n).unwrap();
        assert!(xs.iter().all(|&x| x > 0.0));
        let mean = xs.iter().sum::<f64>() / n as f64;
        let se = (ig.variance() / n as f64).sqrt();
        let expected = (chi / psi).sqrt();
        assert!(
            (mean - expected).abs() < 3.0 * se,
            "mean {mean} expected {expected} se {se}"
        );
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((var / ig.variance() - 1.0).abs() < 0.05);
    }

    #[test]
    fn unit_parameters() {
        check_mean(1.0, 1.0, 21);
    }

    #[test]
    fn larger_chi() {
        check_mean(4.0, 1.0, 22);
    }

    #[test]
    fn tiny_scale_stays_positive() {
        // mixing law of a fitted daily-return model
        let xs = sample_ig(
            0.00373f64.powi(2),
            130_262.0,
            &mut RngStream::new(5),
            100_000,
        )
        .unwrap();
        assert!(xs.iter().all(|&x| x > 0.0 && x.is_finite()));
    }

    #[test]
    fn rejects_nonpositive_parameters() {
        assert!(InverseGaussian::new(0.0, 1.0).is_err());
        assert!(InverseGaussian::new(1.0, -1.0).is_err());
        assert!(InverseGaussian::new(f64::NAN, 1.0).is_err());
    }
}
