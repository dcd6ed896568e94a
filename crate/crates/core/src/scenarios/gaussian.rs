use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{RngStream, Sampler, ScenarioError};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianConfig {
    pub mean: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
}

/// Multivariate normal law `N(mean, covariance)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "GaussianConfig", into = "GaussianConfig")]
pub struct GaussianModel {
    mean: Vec<f64>,
    covariance: DMatrix<f64>,
    factor: DMatrix<f64>,
}

impl TryFrom<GaussianConfig> for GaussianModel {
    type Error = ScenarioError;

    fn try_from(cfg: GaussianConfig) -> Result<Self, Self::Error> {
        let d = cfg.mean.len();
        let mut cov = DMatrix::zeros(d, d);
        if cfg.covariance.len() != d {
            return Err(ScenarioError::DimensionMismatch {
                expected: d,
                actual: cfg.covariance.len(),
            });
        }
        for (i, row) in cfg.covariance.iter().enumerate() {
            if row.len() != d {
                return Err(ScenarioError::DimensionMismatch {
                    expected: d,
                    actual: row.len(),
                });
            }
            for (j, v) in row.iter().enumerate() {
                cov[(i, j)] = *v;
            }
        }
        GaussianModel::new(cfg.mean, cov)
    }
}

impl From<GaussianModel> for GaussianConfig {
    fn from(m: GaussianModel) -> Self {
        let d = m.mean.len();
        GaussianConfig {
            covariance: (0..d)
                .map(|i| (0..d).map(|j| m.covariance[(i, j)]).collect())
                .collect(),
            mean: m.mean,
        }
    }
}

impl GaussianModel {
    pub fn new(mean: Vec<f64>, covariance: DMatrix<f64>) -> Result<Self, ScenarioError> {
        let d = mean.len();
        if covariance.nrows() != d || covariance.ncols() != d {
            return Err(ScenarioError::DimensionMismatch {
                expected: d,
                actual: covariance.nrows(),
            });
        }
        let scale = covariance.abs().max().max(1.0);
        if (&covariance - covariance.transpose()).abs().max() > 1e-12 * scale {
            return Err(ScenarioError::NotSymmetric);
        }
        let factor = psd_factor(&covariance)?;
        Ok(GaussianModel {
            mean,
            covariance,
            factor,
        })
    }

    /// Centered bivariate normal with standard deviations `s1`, `s2` and
    /// correlation `rho`.
    pub fn bivariate(s1: f64, s2: f64, rho: f64) -> Result<Self, ScenarioError> {
        let c = rho * s1 * s2;
        Self::new(
            vec![0.0, 0.0],
            DMatrix::from_row_slice(2, 2, &[s1 * s1, c, c, s2 * s2]),
        )
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn with_mean(&self, mean: Vec<f64>) -> Result<Self, ScenarioError> {
        Self::new(mean, self.covariance.clone())
    }
}

/// `L` with `L L^T = cov`. Cholesky when it succeeds, otherwise a symmetric
/// square root with eigenvalues clipped at zero so that singular covariances
/// (including the zero matrix) sample exactly on their support.
pub(crate) fn psd_factor(cov: &DMatrix<f64>) -> Result<DMatrix<f64>, ScenarioError> {
    if let Some(ch) = cov.clone().cholesky() {
        return Ok(ch.l());
    }
    let eig = cov.clone().symmetric_eigen();
    let scale = cov.abs().max().max(f64::MIN_POSITIVE);
    let min = eig.eigenvalues.min();
    if min < -1e-10 * scale {
        return Err(ScenarioError::NotPsd(min));
    }
    let sqrt = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&sqrt) * eig.eigenvectors.transpose())
}

impl Sampler for GaussianModel {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    #[inline]
    fn sample_into(&self, rng: &mut RngStream, out: &mut [f64]) {
        let d = self.mean.len();
        let mut z = [0.0f64; 16];
        let mut heap;
        let z: &mut [f64] = if d <= 16 {
            &mut z[..d]
        } else {
            heap = vec![0.0; d];
            &mut heap
        };
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        for i in 0..d {
            let mut acc = self.mean[i];
            for (j, zj) in z.iter().enumerate() {
                acc += self.factor[(i, j)] * zj;
            }
            out[i] = acc;
        }
    }
}
