//! Multivariate loss functions.
//!
//! Three families are supported, each made of a sum of univariate losses plus
//! a systemic coupling term weighted by `alpha`:
//!
//! * exponential: `sum_i (exp(l_i x_i) - 1) / l_i + alpha * exp(sum_i l_i x_i)`
//! * polynomial: `sum_i (p_i^t_i - 1) / t_i + alpha * sum_{i<j} (p_i^t_i / t_i) (p_j^t_j / t_j)`
//!   with `p_i = max(1 + x_i, 0)`
//! * CVaR-coupled: `sum_i x_i^+ / (1 - b_i) + alpha * sum_{i<j} x_i^+ x_j^+ / ((1 - b_i)(1 - b_j))`
//!
//! The additive constants are kept exactly as written above, so for
//! `alpha > 0` the exponential and polynomial losses do not vanish at the
//! origin. This shifts the risk value by a constant and leaves the optimal
//! allocation untouched.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error("loss dimension must be at least 1")]
    EmptyParameters,
    #[error("declared dimension {declared} does not match {actual} parameters")]
    DeclaredDimension { declared: usize, actual: usize },
    #[error("parameter {index} = {value} is outside the admissible range {range}")]
    InvalidParameter {
        index: usize,
        value: f64,
        range: &'static str,
    },
    #[error("coupling weight alpha = {0} must be finite and nonnegative")]
    InvalidCoupling(f64),
    #[error("expected a point of dimension {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("{family:?} loss is not twice differentiable at the requested point")]
    NotTwiceDifferentiable { family: LossFamily },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossFamily {
    Exponential,
    Polynomial,
    CvarCoupled,
}

/// Serialized form of a [`LossSpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    pub family: LossFamily,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    pub params: Vec<f64>,
    #[serde(default)]
    pub alpha: f64,
}

/// A validated multivariate loss function. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LossConfig", into = "LossConfig")]
pub struct LossSpec {
    family: LossFamily,
    params: Vec<f64>,
    alpha: f64,
}

impl TryFrom<LossConfig> for LossSpec {
    type Error = LossError;

    fn try_from(cfg: LossConfig) -> Result<Self, Self::Error> {
        if let Some(declared) = cfg.dim {
            if declared != cfg.params.len() {
                return Err(LossError::DeclaredDimension {
                    declared,
                    actual: cfg.params.len(),
                });
            }
        }
        LossSpec::new(cfg.family, cfg.params, cfg.alpha)
    }
}

impl From<LossSpec> for LossConfig {
    fn from(spec: LossSpec) -> Self {
        LossConfig {
            family: spec.family,
            dim: Some(spec.params.len()),
            params: spec.params,
            alpha: spec.alpha,
        }
    }
}

impl LossSpec {
    pub fn new(family: LossFamily, params: Vec<f64>, alpha: f64) -> Result<Self, LossError> {
        if params.is_empty() {
            return Err(LossError::EmptyParameters);
        }
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(LossError::InvalidCoupling(alpha));
        }
        for (index, &value) in params.iter().enumerate() {
            let (ok, range) = match family {
                LossFamily::Exponential => (value > 0.0 && value.is_finite(), "(0, inf)"),
                LossFamily::Polynomial => (value >= 1.0 && value.is_finite(), "[1, inf)"),
                LossFamily::CvarCoupled => (value > 0.0 && value < 1.0, "(0, 1)"),
            };
            if !ok {
                return Err(LossError::InvalidParameter {
                    index,
                    value,
                    range,
                });
            }
        }
        let spec = LossSpec {
            family,
            params,
            alpha,
        };
        if spec.has_unit_exponent() {
            log::warn!(
                "polynomial loss with an exponent equal to 1: the objective may not be strictly convex"
            );
        }
        Ok(spec)
    }

    pub fn exponential(lambda: Vec<f64>, alpha: f64) -> Result<Self, LossError> {
        Self::new(LossFamily::Exponential, lambda, alpha)
    }

    pub fn polynomial(theta: Vec<f64>, alpha: f64) -> Result<Self, LossError> {
        Self::new(LossFamily::Polynomial, theta, alpha)
    }

    pub fn cvar_coupled(beta: Vec<f64>, alpha: f64) -> Result<Self, LossError> {
        Self::new(LossFamily::CvarCoupled, beta, alpha)
    }

    pub fn family(&self) -> LossFamily {
        self.family
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn dim(&self) -> usize {
        self.params.len()
    }

    /// True when some polynomial exponent equals 1, in which case the
    /// objective can fail to be strictly convex.
    pub fn has_unit_exponent(&self) -> bool {
        self.family == LossFamily::Polynomial && self.params.contains(&1.0)
    }

    /// Whether `l(c x) = c l(x)` for `c > 0`.
    pub fn is_positive_homogeneous(&self) -> bool {
        self.family == LossFamily::CvarCoupled && self.alpha == 0.0
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), LossError> {
        if x.len() != self.dim() {
            return Err(LossError::DimensionMismatch {
                expected: self.dim(),
                actual: x.len(),
            });
        }
        Ok(())
    }

    pub fn value(&self, x: &[f64]) -> Result<f64, LossError> {
        self.check_dim(x)?;
        Ok(self.value_unchecked(x))
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>, LossError> {
        self.check_dim(x)?;
        let mut out = vec![0.0; self.dim()];
        self.gradient_unchecked(x, &mut out);
        Ok(out)
    }

    pub fn hessian(&self, x: &[f64]) -> Result<DMatrix<f64>, LossError> {
        self.check_dim(x)?;
        let d = self.dim();
        let mut h = DMatrix::zeros(d, d);
        match self.family {
            LossFamily::Exponential => {
                let s: f64 = self.params.iter().zip(x).map(|(l, xi)| l * xi).sum();
                let coupling = self.alpha * s.exp();
                for i in 0..d {
                    let li = self.params[i];
                    for j in 0..d {
                        h[(i, j)] = coupling * li * self.params[j];
                    }
                    h[(i, i)] += li * (li * x[i]).exp();
                }
            }
            LossFamily::Polynomial => {
                let mut u = vec![0.0; d];
                let mut v = vec![0.0; d];
                let mut w = vec![0.0; d];
                for i in 0..d {
                    let t = self.params[i];
                    let p = 1.0 + x[i];
                    if p > 0.0 {
                        u[i] = p.powf(t) / t;
                        v[i] = p.powf(t - 1.0);
                        w[i] = if t == 1.0 {
                            0.0
                        } else {
                            (t - 1.0) * p.powf(t - 2.0)
                        };
                    } else if p == 0.0 && t < 2.0 {
                        return Err(LossError::NotTwiceDifferentiable {
                            family: self.family,
                        });
                    } else if p == 0.0 && t == 2.0 {
                        w[i] = 1.0;
                    }
                }
                let total: f64 = u.iter().sum();
                for i in 0..d {
                    for j in 0..d {
                        h[(i, j)] = if i == j {
                            w[i] * (1.0 + self.alpha * (total - u[i]))
                        } else {
                            self.alpha * v[i] * v[j]
                        };
                    }
                }
            }
            LossFamily::CvarCoupled => {
                return Err(LossError::NotTwiceDifferentiable {
                    family: self.family,
                })
            }
        }
        Ok(h)
    }

    /// Loss value without the dimension check. `x.len()` must equal `dim()`.
    #[inline]
    pub fn value_unchecked(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim());
        match self.family {
            LossFamily::Exponential => {
                let mut sum = 0.0;
                let mut s = 0.0;
                for (&l, &xi) in self.params.iter().zip(x) {
                    sum += (l * xi).exp_m1() / l;
                    s += l * xi;
                }
                sum + self.alpha * s.exp()
            }
            LossFamily::Polynomial => {
                let mut sum = 0.0;
                let mut total = 0.0;
                let mut squares = 0.0;
                for (&t, &xi) in self.params.iter().zip(x) {
                    let u = (1.0 + xi).max(0.0).powf(t) / t;
                    sum += u - 1.0 / t;
                    total += u;
                    squares += u * u;
                }
                sum + self.alpha * 0.5 * (total * total - squares)
            }
            LossFamily::CvarCoupled => {
                let mut total = 0.0;
                let mut squares = 0.0;
                for (&b, &xi) in self.params.iter().zip(x) {
                    let s = xi.max(0.0) / (1.0 - b);
                    total += s;
                    squares += s * s;
                }
                total + self.alpha * 0.5 * (total * total - squares)
            }
        }
    }

    /// Gradient without the dimension check, written into `out`.
    ///
    /// At the kinks of the positive part (`x_i = 0` for the CVaR family,
    /// `x_i = -1` for the polynomial family) the zero slope is selected.
    #[inline]
    pub fn gradient_unchecked(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim());
        debug_assert_eq!(out.len(), self.dim());
        match self.family {
            LossFamily::Exponential => {
                let s: f64 = self.params.iter().zip(x).map(|(l, xi)| l * xi).sum();
                let coupling = self.alpha * s.exp();
                for ((o, &l), &xi) in out.iter_mut().zip(&self.params).zip(x) {
                    *o = (l * xi).exp() + coupling * l;
                }
            }
            LossFamily::Polynomial => {
                let mut total = 0.0;
                for ((o, &t), &xi) in out.iter_mut().zip(&self.params).zip(x) {
                    // stash u_i in `out` for the second pass
                    let p = (1.0 + xi).max(0.0);
                    *o = p.powf(t) / t;
                    total += *o;
                }
                for ((o, &t), &xi) in out.iter_mut().zip(&self.params).zip(x) {
                    let p = 1.0 + xi;
                    let u = *o;
                    *o = if p > 0.0 {
                        p.powf(t - 1.0) * (1.0 + self.alpha * (total - u))
                    } else {
                        0.0
                    };
                }
            }
            LossFamily::CvarCoupled => {
                let mut total = 0.0;
                for ((o, &b), &xi) in out.iter_mut().zip(&self.params).zip(x) {
                    *o = xi.max(0.0) / (1.0 - b);
                    total += *o;
                }
                for ((o, &b), &xi) in out.iter_mut().zip(&self.params).zip(x) {
                    let s = *o;
                    *o = if xi > 0.0 {
                        (1.0 + self.alpha * (total - s)) / (1.0 - b)
                    } else {
                        0.0
                    };
                }
            }
        }
    }
}
