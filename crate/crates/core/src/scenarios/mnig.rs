use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::inverse_gaussian::InverseGaussian;
use super::{RngStream, SampleMatrix, Sampler, ScenarioError};

const DET_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MnigConfig {
    pub alpha: f64,
    pub beta: Vec<f64>,
    pub delta: f64,
    pub mu: Vec<f64>,
    pub gamma: Vec<Vec<f64>>,
    /// Rescale `gamma` to unit determinant before validation.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub normalize_gamma: bool,
}

/// Parameters `(alpha, beta, delta, mu, Gamma)` of a multivariate normal
/// inverse Gaussian law, `X = mu + Z Gamma beta + sqrt(Z) Gamma^{1/2} Y` with
/// `Z ~ IG(delta^2, alpha^2 - beta' Gamma beta)` and `Y ~ N(0, I)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MnigConfig", into = "MnigConfig")]
pub struct MnigParams {
    alpha: f64,
    beta: DVector<f64>,
    delta: f64,
    mu: DVector<f64>,
    gamma: DMatrix<f64>,
}

impl TryFrom<MnigConfig> for MnigParams {
    type Error = ScenarioError;

    fn try_from(cfg: MnigConfig) -> Result<Self, Self::Error> {
        let d = cfg.mu.len();
        if cfg.gamma.len() != d || cfg.gamma.iter().any(|r| r.len() != d) {
            return Err(ScenarioError::InvalidMnig(format!(
                "gamma must be a {d}x{d} matrix"
            )));
        }
        let gamma = DMatrix::from_fn(d, d, |i, j| cfg.gamma[i][j]);
        if cfg.normalize_gamma {
            MnigParams::normalized(cfg.alpha, cfg.beta, cfg.delta, cfg.mu, gamma)
        } else {
            MnigParams::new(cfg.alpha, cfg.beta, cfg.delta, cfg.mu, gamma)
        }
    }
}

impl From<MnigParams> for MnigConfig {
    fn from(p: MnigParams) -> Self {
        let d = p.dim();
        MnigConfig {
            alpha: p.alpha,
            beta: p.beta.iter().copied().collect(),
            delta: p.delta,
            mu: p.mu.iter().copied().collect(),
            gamma: (0..d)
                .map(|i| (0..d).map(|j| p.gamma[(i, j)]).collect())
                .collect(),
            normalize_gamma: false,
        }
    }
}

impl MnigParams {
    /// Validated parameters: `alpha, delta > 0`, `Gamma` symmetric positive
    /// definite with unit determinant and `alpha^2 > beta' Gamma beta`.
    pub fn new(
        alpha: f64,
        beta: Vec<f64>,
        delta: f64,
        mu: Vec<f64>,
        gamma: DMatrix<f64>,
    ) -> Result<Self, ScenarioError> {
        let p = Self::assemble(alpha, beta, delta, mu, gamma)?;
        if !(p.delta > 0.0) {
            return Err(ScenarioError::InvalidMnig(format!(
                "delta must be positive, got {}",
                p.delta
            )));
        }
        let det = p.gamma.determinant();
        if (det - 1.0).abs() > DET_TOLERANCE {
            return Err(ScenarioError::InvalidMnig(format!(
                "det(gamma) must be 1, got {det}"
            )));
        }
        Ok(p)
    }

    /// Like [`MnigParams::new`] after dividing `gamma` by `det(gamma)^{1/d}`.
    pub fn normalized(
        alpha: f64,
        beta: Vec<f64>,
        delta: f64,
        mu: Vec<f64>,
        gamma: DMatrix<f64>,
    ) -> Result<Self, ScenarioError> {
        let d = gamma.nrows().max(1) as f64;
        let det = gamma.determinant();
        if !(det > 0.0) {
            return Err(ScenarioError::InvalidMnig(format!(
                "gamma must be positive definite, det = {det}"
            )));
        }
        let gamma = gamma / det.powf(1.0 / d);
        Self::new(alpha, beta, delta, mu, gamma)
    }

    /// Starting point for EM. Allows `delta = 0` and an arbitrary positive
    /// definite `gamma`; never a valid fitted output.
    pub fn initial_guess(
        alpha: f64,
        beta: Vec<f64>,
        delta: f64,
        mu: Vec<f64>,
        gamma: DMatrix<f64>,
    ) -> Result<Self, ScenarioError> {
        let p = Self::assemble(alpha, beta, delta, mu, gamma)?;
        if !(p.delta >= 0.0) {
            return Err(ScenarioError::InvalidMnig(format!(
                "initial delta must be nonnegative, got {}",
                p.delta
            )));
        }
        Ok(p)
    }

    fn assemble(
        alpha: f64,
        beta: Vec<f64>,
        delta: f64,
        mu: Vec<f64>,
        gamma: DMatrix<f64>,
    ) -> Result<Self, ScenarioError> {
        let d = mu.len();
        if d == 0 {
            return Err(ScenarioError::InvalidMnig(
                "dimension must be at least 1".into(),
            ));
        }
        if beta.len() != d || gamma.nrows() != d || gamma.ncols() != d {
            return Err(ScenarioError::InvalidMnig(format!(
                "inconsistent dimensions: mu {d}, beta {}, gamma {}x{}",
                beta.len(),
                gamma.nrows(),
                gamma.ncols()
            )));
        }
        if !(alpha > 0.0 && alpha.is_finite()) || !delta.is_finite() {
            return Err(ScenarioError::InvalidMnig(format!(
                "alpha must be positive and finite, got {alpha}"
            )));
        }
        if beta
            .iter()
            .chain(&mu)
            .chain(gamma.iter())
            .any(|v| !v.is_finite())
        {
            return Err(ScenarioError::InvalidMnig("non-finite entry".into()));
        }
        let scale = gamma.abs().max().max(1.0);
        if (&gamma - gamma.transpose()).abs().max() > 1e-9 * scale {
            return Err(ScenarioError::InvalidMnig("gamma must be symmetric".into()));
        }
        if gamma.clone().cholesky().is_none() {
            return Err(ScenarioError::InvalidMnig(
                "gamma must be positive definite".into(),
            ));
        }
        let p = MnigParams {
            alpha,
            beta: DVector::from_vec(beta),
            delta,
            mu: DVector::from_vec(mu),
            gamma,
        };
        let bgb = p.beta_gamma_beta();
        if !(alpha * alpha > bgb) {
            return Err(ScenarioError::InvalidMnig(format!(
                "alpha^2 = {} must exceed beta' gamma beta = {bgb}",
                alpha * alpha
            )));
        }
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> &DVector<f64> {
        &self.beta
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn gamma(&self) -> &DMatrix<f64> {
        &self.gamma
    }

    pub fn beta_gamma_beta(&self) -> f64 {
        (self.beta.transpose() * &self.gamma * &self.beta)[(0, 0)]
    }

    /// `alpha^2 - beta' Gamma beta`, the second mixing parameter.
    pub fn psi(&self) -> f64 {
        self.alpha * self.alpha - self.beta_gamma_beta()
    }

    /// `E[X] = mu + E[Z] Gamma beta` with `E[Z] = delta / sqrt(psi)`.
    pub fn mean(&self) -> DVector<f64> {
        &self.mu + (&self.gamma * &self.beta) * (self.delta / self.psi().sqrt())
    }

    /// `delta psi^{-1/2} (Gamma + psi^{-1} Gamma beta beta' Gamma)`.
    pub fn covariance(&self) -> DMatrix<f64> {
        let psi = self.psi();
        let gb = &self.gamma * &self.beta;
        (&self.gamma + (&gb * gb.transpose()) / psi) * (self.delta / psi.sqrt())
    }

    /// Parameters flattened as `(delta, mu, beta, vec(Gamma), alpha)`.
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 + 2 * self.dim() + self.dim().pow(2));
        v.push(self.delta);
        v.extend(self.mu.iter());
        v.extend(self.beta.iter());
        v.extend(self.gamma.iter());
        v.push(self.alpha);
        v
    }

    /// Euclidean distance between flattened parameter tuples.
    pub fn distance(&self, other: &MnigParams) -> f64 {
        self.flatten()
            .iter()
            .zip(other.flatten())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// Sampler for an MNIG law.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "MnigParams", into = "MnigParams")]
pub struct MnigModel {
    params: MnigParams,
    mixing: InverseGaussian,
    gamma_beta: Vec<f64>,
    gamma_sqrt: DMatrix<f64>,
}

impl TryFrom<MnigParams> for MnigModel {
    type Error = ScenarioError;

    fn try_from(params: MnigParams) -> Result<Self, Self::Error> {
        MnigModel::new(params)
    }
}

impl From<MnigModel> for MnigParams {
    fn from(m: MnigModel) -> Self {
        m.params
    }
}

impl MnigModel {
    pub fn new(params: MnigParams) -> Result<Self, ScenarioError> {
        if !(params.delta > 0.0) {
            return Err(ScenarioError::InvalidMnig(
                "cannot sample with delta = 0".into(),
            ));
        }
        let mixing = InverseGaussian::new(params.delta * params.delta, params.psi())?;
        let eig = params.gamma.clone().symmetric_eigen();
        let sqrt = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
        let gamma_sqrt =
            &eig.eigenvectors * DMatrix::from_diagonal(&sqrt) * eig.eigenvectors.transpose();
        let gamma_beta = (&params.gamma * &params.beta).iter().copied().collect();
        Ok(MnigModel {
            params,
            mixing,
            gamma_beta,
            gamma_sqrt,
        })
    }

    pub fn params(&self) -> &MnigParams {
        &self.params
    }

    pub fn mixing(&self) -> &InverseGaussian {
        &self.mixing
    }

    /// One draw of `X` given a mixing value `z`.
    #[inline]
    pub fn sample_given_mixing(&self, z: f64, rng: &mut RngStream, out: &mut [f64]) {
        let d = self.params.dim();
        let sz = z.sqrt();
        let mut y = [0.0f64; 16];
        let mut heap;
        let y: &mut [f64] = if d <= 16 {
            &mut y[..d]
        } else {
            heap = vec![0.0; d];
            &mut heap
        };
        for yi in y.iter_mut() {
            *yi = rng.sample(StandardNormal);
        }
        for i in 0..d {
            let mut acc = 0.0;
            for (j, yj) in y.iter().enumerate() {
                acc += self.gamma_sqrt[(i, j)] * yj;
            }
            out[i] = self.params.mu[i] + z * self.gamma_beta[i] + sz * acc;
        }
    }

    /// Draws `n` observations and returns them with the mixing values used.
    pub fn sample_with_mixing(&self, rng: &mut RngStream, n: usize) -> (SampleMatrix, Vec<f64>) {
        let d = self.dim();
        let mut m = SampleMatrix::with_capacity(d, n);
        let mut zs = Vec::with_capacity(n);
        let mut buf = vec![0.0; d];
        for _ in 0..n {
            let z = self.mixing.sample(rng);
            self.sample_given_mixing(z, rng, &mut buf);
            m.data.extend_from_slice(&buf);
            zs.push(z);
        }
        (m, zs)
    }
}

impl Sampler for MnigModel {
    fn dim(&self) -> usize {
        self.params.dim()
    }

    #[inline]
    fn sample_into(&self, rng: &mut RngStream, out: &mut [f64]) {
        let z = self.mixing.sample(rng);
        self.sample_given_mixing(z, rng, out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn generic() -> MnigParams {
        MnigParams::new(
            2.0,
            vec![0.5, -0.3],
            1.5,
            vec![1.0, -0.5],
            DMatrix::from_row_slice(2, 2, &[1.25, 0.5, 0.5, 1.0]),
        )
        .unwrap()
    }

    #[test]
    fn validation() {
        let g = DMatrix::identity(2, 2);
        assert!(MnigParams::new(1.0, vec![0.0; 2], 1.0, vec![0.0; 2], g.clone()).is_ok());
        assert!(MnigParams::new(1.0, vec![1.0, 0.0], 1.0, vec![0.0; 2], g.clone()).is_err());
        assert!(MnigParams::new(1.0, vec![0.0; 2], 0.0, vec![0.0; 2], g.clone()).is_err());
        assert!(MnigParams::new(1.0, vec![0.0; 2], 1.0, vec![0.0; 2], &g * 2.0).is_err());
        assert!(MnigParams::normalized(1.0, vec![0.0; 2], 1.0, vec![0.0; 2], &g * 2.0).is_ok());
        assert!(MnigParams::initial_guess(1.0, vec![0.0; 2], 0.0, vec![0.0; 2], &g * 2.0).is_ok());
        assert!(MnigParams::new(1.0, vec![0.0; 3], 1.0, vec![0.0; 2], g).is_err());
    }

    #[test]
    fn symmetric_law_is_centered() {
        let p = MnigParams::new(
            3.0,
            vec![0.0, 0.0],
            1.0,
            vec![0.0, 0.0],
            DMatrix::identity(2, 2),
        )
        .unwrap();
        let n = 400_000;
        let s = MnigModel::new(p.clone())
            .unwrap()
            .sample(&mut RngStream::new(31), n);
        let mean = s.column_means();
        let cov = p.covariance();
        for j in 0..2 {
            let se = (cov[(j, j)] / n as f64).sqrt();
            assert!(mean[j].abs() < 3.0 * se, "{} vs se {}", mean[j], se);
        }
    }

    #[test]
    fn mean_and_covariance_match_moment_formulas() {
        let p = generic();
        let n = 1_000_000;
        let s = MnigModel::new(p.clone())
            .unwrap()
            .sample(&mut RngStream::new(32), n);
        let mean = s.column_means();
        let expected = p.mean();
        let cov = p.covariance();
        for j in 0..2 {
            let se = (cov[(j, j)] / n as f64).sqrt();
            assert!((mean[j] - expected[j]).abs() < 3.0 * se);
        }
        let sample_cov = s.covariance();
        for i in 0..2 {
            for j in 0..2 {
                let rel = (sample_cov[(i, j)] - cov[(i, j)]).abs() / cov[(i, j)].abs();
                assert!(rel < 0.05, "cov({i},{j}) rel err {rel}");
            }
        }
    }

    #[test]
    fn mixing_consistency_with_frozen_z() {
        let p = generic();
        let model = MnigModel::new(p.clone()).unwrap();
        let z = 0.7;
        let n = 200_000;
        let mut rng = RngStream::new(33);
        let mut buf = [0.0; 2];
        let mut sum = [0.0; 2];
        for _ in 0..n {
            model.sample_given_mixing(z, &mut rng, &mut buf);
            sum[0] += buf[0];
            sum[1] += buf[1];
        }
        let gb = p.gamma() * p.beta();
        for j in 0..2 {
            let expected = p.mu()[j] + z * gb[j];
            let se = (z * p.gamma()[(j, j)] / n as f64).sqrt();
            assert!((sum[j] / n as f64 - expected).abs() < 3.0 * se);
        }
    }

    #[test]
    fn recorded_mixing_reproduces_the_stream() {
        let model = MnigModel::new(generic()).unwrap();
        let (a, _) = model.sample_with_mixing(&mut RngStream::new(4), 100);
        let b = model.sample(&mut RngStream::new(4), 100);
        assert_eq!(a, b);
    }

    fn excess_kurtosis(xs: &[f64]) -> f64 {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
        let k = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
        k / (v * v) - 3.0
    }

    #[test]
    fn kurtosis_decreases_toward_gaussian() {
        // delta = alpha keeps the marginal variance at 1 when beta = 0
        let mut kurt = Vec::new();
        for (i, alpha) in [1.0f64, 4.0, 16.0].into_iter().enumerate() {
            let p = MnigParams::new(alpha, vec![0.0], alpha, vec![0.0], DMatrix::identity(1, 1))
                .unwrap();
            let s = MnigModel::new(p)
                .unwrap()
                .sample(&mut RngStream::new(40 + i as u64), 1_000_000);
            kurt.push(excess_kurtosis(s.as_slice()));
        }
        // theoretical excess kurtosis is 3 / (alpha delta)
        assert!(kurt[0] > kurt[1] && kurt[1] > kurt[2], "{kurt:?}");
        assert!(kurt[2].abs() < 0.1);
    }

    #[test]
    fn flatten_layout() {
        let p = generic();
        let f = p.flatten();
        assert_eq!(f.len(), 1 + 2 + 2 + 4 + 1);
        assert_eq!(f[0], 1.5);
        assert_eq!(*f.last().unwrap(), 2.0);
        assert_eq!(p.distance(&p), 0.0);
    }
}
