//! Scenario models for the portfolio vector `X`.
//!
//! Every model draws from an explicit [`RngStream`], so a fixed seed
//! reproduces the same matrix of scenarios bit for bit.

mod empirical;
mod gaussian;
mod inverse_gaussian;
mod mnig;

pub use empirical::{read_csv_matrix, EmpiricalConfig, EmpiricalModel};
pub use gaussian::{GaussianConfig, GaussianModel};
pub use inverse_gaussian::{sample_ig, InverseGaussian};
pub use mnig::{MnigConfig, MnigModel, MnigParams};

use std::path::PathBuf;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("covariance matrix is not symmetric")]
    NotSymmetric,
    #[error("covariance matrix is not positive semidefinite (smallest eigenvalue {0:e})")]
    NotPsd(f64),
    #[error("inverse Gaussian parameters must be positive, got chi = {chi}, psi = {psi}")]
    InvalidInverseGaussian { chi: f64, psi: f64 },
    #[error("invalid MNIG parameters: {0}")]
    InvalidMnig(String),
    #[error("CSV parse error at row {row}, column {column}: {message}")]
    Csv {
        row: usize,
        column: usize,
        message: String,
    },
    #[error("scenario data file contains no observations")]
    EmptyData,
    #[error("cannot read scenario data from {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Seeded random stream. Identical seeds give identical draws.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        RngStream {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Position of the underlying block counter, in 32-bit words.
    pub fn word_pos(&self) -> u128 {
        self.inner.get_word_pos()
    }

    /// An independent stream derived from this stream's seed.
    pub fn substream(&self, index: u64) -> RngStream {
        let mut inner = ChaCha8Rng::seed_from_u64(self.seed);
        inner.set_stream(index.wrapping_add(1));
        RngStream {
            seed: self.seed,
            inner,
        }
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Row-major `n x d` matrix of scenarios, one observation per row.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SampleMatrix {
    pub fn new(dim: usize) -> Self {
        SampleMatrix {
            dim,
            data: Vec::new(),
        }
    }

    pub fn with_capacity(dim: usize, rows: usize) -> Self {
        SampleMatrix {
            dim,
            data: Vec::with_capacity(dim * rows),
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, ScenarioError> {
        let dim = rows.first().map(Vec::len).ok_or(ScenarioError::EmptyData)?;
        let mut m = SampleMatrix::with_capacity(dim, rows.len());
        for r in rows {
            m.push_row(r)?;
        }
        Ok(m)
    }

    pub fn push_row(&mut self, row: &[f64]) -> Result<(), ScenarioError> {
        if row.len() != self.dim {
            return Err(ScenarioError::DimensionMismatch {
                expected: self.dim,
                actual: row.len(),
            });
        }
        self.data.extend_from_slice(row);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter_rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim.max(1))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn column_means(&self) -> Vec<f64> {
        let n = self.rows() as f64;
        let mut mean = vec![0.0; self.dim];
        for r in self.iter_rows() {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        mean
    }

    /// Unbiased sample covariance.
    pub fn covariance(&self) -> nalgebra::DMatrix<f64> {
        let mean = self.column_means();
        let d = self.dim;
        let mut cov = nalgebra::DMatrix::zeros(d, d);
        for r in self.iter_rows() {
            for i in 0..d {
                let di = r[i] - mean[i];
                for j in 0..=i {
                    cov[(i, j)] += di * (r[j] - mean[j]);
                }
            }
        }
        let denom = (self.rows() as f64 - 1.0).max(1.0);
        for i in 0..d {
            for j in 0..=i {
                let v = cov[(i, j)] / denom;
                cov[(i, j)] = v;
                cov[(j, i)] = v;
            }
        }
        cov
    }
}

/// Anything that can draw i.i.d. scenarios of a fixed dimension.
pub trait Sampler {
    fn dim(&self) -> usize;

    /// Writes one draw into `out`, which has length `dim()`.
    fn sample_into(&self, rng: &mut RngStream, out: &mut [f64]);

    fn sample(&self, rng: &mut RngStream, n: usize) -> SampleMatrix {
        let d = self.dim();
        let mut m = SampleMatrix::with_capacity(d, n);
        let mut buf = vec![0.0; d];
        for _ in 0..n {
            self.sample_into(rng, &mut buf);
            m.data.extend_from_slice(&buf);
        }
        m
    }
}

/// Scenario model used by the solvers and the CLI.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScenarioModel {
    Gaussian(GaussianModel),
    Mnig(MnigModel),
    Empirical(EmpiricalModel),
    /// `scale * X + shift` for an inner model `X`.
    Affine {
        inner: Box<ScenarioModel>,
        #[serde(default = "one")]
        scale: f64,
        shift: Vec<f64>,
    },
}

fn one() -> f64 {
    1.0
}

impl ScenarioModel {
    /// `X + shift`.
    pub fn shifted(self, shift: Vec<f64>) -> Result<Self, ScenarioError> {
        self.affine(1.0, shift)
    }

    /// `scale * X`.
    pub fn scaled(self, scale: f64) -> Result<Self, ScenarioError> {
        let d = self.dim();
        self.affine(scale, vec![0.0; d])
    }

    pub fn affine(self, scale: f64, shift: Vec<f64>) -> Result<Self, ScenarioError> {
        if shift.len() != self.dim() {
            return Err(ScenarioError::DimensionMismatch {
                expected: self.dim(),
                actual: shift.len(),
            });
        }
        Ok(ScenarioModel::Affine {
            inner: Box::new(self),
            scale,
            shift,
        })
    }

    /// Mean of the law (the sample mean for empirical data).
    pub fn mean(&self) -> Vec<f64> {
        match self {
            ScenarioModel::Gaussian(m) => m.mean().to_vec(),
            ScenarioModel::Mnig(m) => m.params().mean().iter().copied().collect(),
            ScenarioModel::Empirical(m) => m.data().column_means(),
            ScenarioModel::Affine {
                inner,
                scale,
                shift,
            } => inner
                .mean()
                .iter()
                .zip(shift)
                .map(|(m, s)| scale * m + s)
                .collect(),
        }
    }

    /// Checks invariants that deserialization alone cannot enforce.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if let ScenarioModel::Affine { inner, shift, .. } = self {
            inner.validate()?;
            if shift.len() != inner.dim() {
                return Err(ScenarioError::DimensionMismatch {
                    expected: inner.dim(),
                    actual: shift.len(),
                });
            }
        }
        Ok(())
    }
}

impl Sampler for ScenarioModel {
    fn dim(&self) -> usize {
        match self {
            ScenarioModel::Gaussian(m) => m.dim(),
            ScenarioModel::Mnig(m) => m.dim(),
            ScenarioModel::Empirical(m) => m.dim(),
            ScenarioModel::Affine { inner, .. } => inner.dim(),
        }
    }

    #[inline]
    fn sample_into(&self, rng: &mut RngStream, out: &mut [f64]) {
        match self {
            ScenarioModel::Gaussian(m) => m.sample_into(rng, out),
            ScenarioModel::Mnig(m) => m.sample_into(rng, out),
            ScenarioModel::Empirical(m) => m.sample_into(rng, out),
            ScenarioModel::Affine {
                inner,
                scale,
                shift,
            } => {
                inner.sample_into(rng, out);
                for (o, s) in out.iter_mut().zip(shift) {
                    *o = *scale * *o + s;
                }
            }
        }
    }
}

impl From<GaussianModel> for ScenarioModel {
    fn from(m: GaussianModel) -> Self {
        ScenarioModel::Gaussian(m)
    }
}

impl From<MnigModel> for ScenarioModel {
    fn from(m: MnigModel) -> Self {
        ScenarioModel::Mnig(m)
    }
}

impl From<EmpiricalModel> for ScenarioModel {
    fn from(m: EmpiricalModel) -> Self {
        ScenarioModel::Empirical(m)
    }
}

pub fn sample_gaussian(model: &GaussianModel, rng: &mut RngStream, n: usize) -> SampleMatrix {
    model.sample(rng, n)
}

pub fn sample_mnig(model: &MnigModel, rng: &mut RngStream, n: usize) -> SampleMatrix {
    model.sample(rng, n)
}

pub fn sample_empirical(model: &EmpiricalModel, rng: &mut RngStream, n: usize) -> SampleMatrix {
    model.sample(rng, n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let model = GaussianModel::bivariate(1.0, 2.0, 0.3).unwrap();
        let a = model.sample(&mut RngStream::new(7), 100);
        let b = model.sample(&mut RngStream::new(7), 100);
        let c = model.sample(&mut RngStream::new(8), 100);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn substreams_differ() {
        let base = RngStream::new(3);
        let mut a = base.substream(0);
        let mut b = base.substream(1);
        assert_ne!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn affine_model_shifts_and_scales() {
        let base: ScenarioModel =
            GaussianModel::new(vec![1.0, 2.0], nalgebra::DMatrix::zeros(2, 2))
                .unwrap()
                .into();
        let m = base.affine(2.0, vec![0.5, -1.0]).unwrap();
        let s = m.sample(&mut RngStream::new(1), 3);
        for r in s.iter_rows() {
            assert_eq!(r, &[2.5, 3.0]);
        }
    }

    #[test]
    fn tagged_config_round_trip() {
        let json =
            r#"{"kind": "gaussian", "mean": [0.0, 1.0], "covariance": [[1.0, 0.5], [0.5, 2.0]]}"#;
        let m: ScenarioModel = serde_json::from_str(json).unwrap();
        assert_eq!(m.mean(), vec![0.0, 1.0]);
        let back: ScenarioModel =
            serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        assert_eq!(back.dim(), 2);
        let bad = r#"{"kind": "gaussian", "mean": [0.0], "covariance": [[1.0]], "extra": 1}"#;
        assert!(serde_json::from_str::<ScenarioModel>(bad).is_err());
        let affine = r#"{"kind": "affine", "scale": 2.0, "shift": [1.0],
            "inner": {"kind": "gaussian", "mean": [0.5], "covariance": [[1.0]]}}"#;
        let a: ScenarioModel = serde_json::from_str(affine).unwrap();
        assert_eq!(a.mean(), vec![2.0]);
    }

    #[test]
    fn sample_matrix_rejects_ragged_rows() {
        assert!(SampleMatrix::from_rows(&[vec![1.0, 2.0], vec![1.0]]).is_err());
        assert!(SampleMatrix::from_rows(&[]).is_err());
    }
}
