//! Marginal risk contribution and marginal risk allocation under a shock `Y`.
//!
//! `R(X, Y) = -E[Y . grad l(-X - m*)]` and `RA(X, Y) = M^{-1} V` with
//! `M = E[hess l(-X - m*)]` and `V = -E[hess l(-X - m*) Y]`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::losses::{LossError, LossFamily, LossSpec};
use crate::scenarios::{RngStream, SampleMatrix, Sampler, ScenarioModel};

#[derive(Debug, Error)]
pub enum SensitivityError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("need at least {needed} joint samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("expected Hessian is singular (condition number {condition:e})")]
    SingularSensitivity { condition: f64 },
    #[error("closed form requires the bivariate exponential loss")]
    NotApplicable,
    #[error(transparent)]
    Loss(#[from] LossError),
}

/// Joint law of `(X, Y)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ShockModel {
    /// `Y` drawn from its own law, independent of `X`.
    Independent { model: ScenarioModel },
    /// `Y` equal to a constant vector.
    Deterministic { value: Vec<f64> },
    /// `Y = diag(scale) X + shift`.
    ComponentCorrelated { scale: Vec<f64>, shift: Vec<f64> },
}

impl ShockModel {
    pub fn dim(&self) -> usize {
        match self {
            ShockModel::Independent { model } => model.dim(),
            ShockModel::Deterministic { value } => value.len(),
            ShockModel::ComponentCorrelated { scale, .. } => scale.len(),
        }
    }

    pub fn validate(&self, d: usize) -> Result<(), SensitivityError> {
        let lens: Vec<usize> = match self {
            ShockModel::Independent { model } => vec![model.dim()],
            ShockModel::Deterministic { value } => vec![value.len()],
            ShockModel::ComponentCorrelated { scale, shift } => vec![scale.len(), shift.len()],
        };
        for actual in lens {
            if actual != d {
                return Err(SensitivityError::DimensionMismatch {
                    expected: d,
                    actual,
                });
            }
        }
        Ok(())
    }

    /// `E[Y]` given the law of `X`.
    pub fn mean(&self, x_model: &ScenarioModel) -> Vec<f64> {
        match self {
            ShockModel::Independent { model } => model.mean(),
            ShockModel::Deterministic { value } => value.clone(),
            ShockModel::ComponentCorrelated { scale, shift } => x_model
                .mean()
                .iter()
                .zip(scale.iter().zip(shift))
                .map(|(m, (a, b))| a * m + b)
                .collect(),
        }
    }

    /// `n` rows of `(X, Y)`, `2d` columns.
    pub fn sample_joint<S: Sampler + ?Sized>(
        &self,
        x_model: &S,
        rng: &mut RngStream,
        n: usize,
    ) -> Result<SampleMatrix, SensitivityError> {
        let d = x_model.dim();
        self.validate(d)?;
        let mut out = SampleMatrix::with_capacity(2 * d, n);
        let mut row = vec![0.0; 2 * d];
        for _ in 0..n {
            let (x, y) = row.split_at_mut(d);
            x_model.sample_into(rng, x);
            match self {
                ShockModel::Independent { model } => model.sample_into(rng, y),
                ShockModel::Deterministic { value } => y.copy_from_slice(value),
                ShockModel::ComponentCorrelated { scale, shift } => {
                    for j in 0..d {
                        y[j] = scale[j] * x[j] + shift[j];
                    }
                }
            }
            out.push_row(&row).expect("row has 2d entries");
        }
        Ok(out)
    }
}

/// A Monte Carlo estimate and its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShockSe {
    pub risk_marginal: f64,
    pub alloc_marginal: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShockReport {
    pub risk_marginal: f64,
    pub alloc_marginal: Vec<f64>,
    pub m_matrix: Vec<Vec<f64>>,
    pub v_vector: Vec<f64>,
    pub se: ShockSe,
    pub n_samples: usize,
}

impl ShockReport {
    pub fn m(&self) -> DMatrix<f64> {
        let d = self.m_matrix.len();
        DMatrix::from_fn(d, d, |i, j| self.m_matrix[i][j])
    }
}

/// Number of batches used for batch-means standard errors.
pub const DEFAULT_BATCHES: usize = 20;

fn split_joint(joint: &SampleMatrix, d: usize) -> Result<(), SensitivityError> {
    if joint.dim() != 2 * d {
        return Err(SensitivityError::DimensionMismatch {
            expected: 2 * d,
            actual: joint.dim(),
        });
    }
    Ok(())
}

fn batch_ranges(n: usize, batches: usize) -> Vec<std::ops::Range<usize>> {
    let b = batches.clamp(1, n.max(1));
    (0..b).map(|k| k * n / b..(k + 1) * n / b).collect()
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let b = values.len() as f64;
    let mean = values.iter().sum::<f64>() / b;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (b - 1.0);
    (mean, (var / b).sqrt())
}

#[derive(Clone)]
struct Sums {
    risk: f64,
    m: DMatrix<f64>,
    v: DVector<f64>,
    count: usize,
}

impl Sums {
    fn zero(d: usize) -> Self {
        Sums {
            risk: 0.0,
            m: DMatrix::zeros(d, d),
            v: DVector::zeros(d),
            count: 0,
        }
    }

    fn add(&mut self, other: &Sums) {
        self.risk += other.risk;
        self.m += &other.m;
        self.v += &other.v;
        self.count += other.count;
    }
}

fn accumulate(
    spec: &LossSpec,
    joint: &SampleMatrix,
    m_star: &[f64],
    range: std::ops::Range<usize>,
    with_hessian: bool,
) -> Result<Sums, SensitivityError> {
    let d = spec.dim();
    let mut s = Sums::zero(d);
    let mut arg = vec![0.0; d];
    let mut grad = vec![0.0; d];
    for k in range {
        let row = joint.row(k);
        let (x, y) = row.split_at(d);
        for j in 0..d {
            arg[j] = -x[j] - m_star[j];
        }
        spec.gradient_unchecked(&arg, &mut grad);
        s.risk -= y.iter().zip(&grad).map(|(a, b)| a * b).sum::<f64>();
        if with_hessian {
            let h = spec.hessian(&arg)?;
            let yv = DVector::from_column_slice(y);
            s.v -= &h * yv;
            s.m += h;
        }
        s.count += 1;
    }
    Ok(s)
}

fn batched_sums(
    spec: &LossSpec,
    joint: &SampleMatrix,
    m_star: &[f64],
    batches: usize,
    with_hessian: bool,
) -> Result<Vec<Sums>, SensitivityError> {
    let d = spec.dim();
    split_joint(joint, d)?;
    if m_star.len() != d {
        return Err(SensitivityError::DimensionMismatch {
            expected: d,
            actual: m_star.len(),
        });
    }
    if joint.rows() < 2 {
        return Err(SensitivityError::TooFewSamples {
            needed: 2,
            got: joint.rows(),
        });
    }
    batch_ranges(joint.rows(), batches)
        .into_par_iter()
        .map(|r| accumulate(spec, joint, m_star, r, with_hessian))
        .collect()
}

/// Monte Carlo estimate of `R(X, Y) = -E[Y . grad l(-X - m*)]` from joint
/// samples laid out as `(X, Y)` rows. The positive-part family is accepted
/// since its gradient exists almost everywhere under continuous laws.
pub fn risk_marginal(
    spec: &LossSpec,
    joint: &SampleMatrix,
    m_star: &[f64],
) -> Result<Estimate, SensitivityError> {
    if spec.family() == LossFamily::CvarCoupled {
        log::warn!("positive-part loss: the marginal risk uses an almost-everywhere gradient");
    }
    let sums = batched_sums(spec, joint, m_star, DEFAULT_BATCHES, false)?;
    let per_batch: Vec<f64> = sums.iter().map(|s| s.risk / s.count as f64).collect();
    let total: f64 = sums.iter().map(|s| s.risk).sum::<f64>() / joint.rows() as f64;
    let (_, se) = mean_and_se(&per_batch);
    Ok(Estimate { value: total, se })
}

fn solve_ra(m: &DMatrix<f64>, v: &DVector<f64>) -> Result<DVector<f64>, SensitivityError> {
    let sv = m.singular_values();
    let condition = sv.max() / sv.min();
    if !(condition.is_finite() && condition < 1e12) {
        return Err(SensitivityError::SingularSensitivity { condition });
    }
    m.clone()
        .lu()
        .solve(v)
        .ok_or(SensitivityError::SingularSensitivity { condition })
}

/// Marginal risk allocation `RA = M^{-1} V` with batch-means standard
/// errors. The positive-part family is rejected: its Hessian vanishes
/// almost everywhere.
pub fn alloc_marginal(
    spec: &LossSpec,
    joint: &SampleMatrix,
    m_star: &[f64],
) -> Result<ShockReport, SensitivityError> {
    alloc_marginal_batched(spec, joint, m_star, DEFAULT_BATCHES)
}

pub fn alloc_marginal_batched(
    spec: &LossSpec,
    joint: &SampleMatrix,
    m_star: &[f64],
    batches: usize,
) -> Result<ShockReport, SensitivityError> {
    if spec.family() == LossFamily::CvarCoupled {
        return Err(LossError::NotTwiceDifferentiable {
            family: spec.family(),
        }
        .into());
    }
    let d = spec.dim();
    let sums = batched_sums(spec, joint, m_star, batches, true)?;
    let mut total = Sums::zero(d);
    for s in &sums {
        total.add(s);
    }
    let n = total.count as f64;
    let mut m = total.m / n;
    m = (&m + m.transpose()) * 0.5;
    let v = total.v / n;
    let ra = solve_ra(&m, &v)?;

    let mut batch_risk = Vec::with_capacity(sums.len());
    let mut batch_ra: Vec<Vec<f64>> = vec![Vec::with_capacity(sums.len()); d];
    for s in &sums {
        let c = s.count as f64;
        batch_risk.push(s.risk / c);
        let mb = &s.m / c;
        let mb = (&mb + mb.transpose()) * 0.5;
        if let Ok(r) = solve_ra(&mb, &(&s.v / c)) {
            for j in 0..d {
                batch_ra[j].push(r[j]);
            }
        }
    }
    let (_, risk_se) = mean_and_se(&batch_risk);
    Ok(ShockReport {
        risk_marginal: total.risk / n,
        alloc_marginal: ra.iter().copied().collect(),
        m_matrix: (0..d)
            .map(|i| (0..d).map(|j| m[(i, j)]).collect())
            .collect(),
        v_vector: v.iter().copied().collect(),
        se: ShockSe {
            risk_marginal: risk_se,
            alloc_marginal: batch_ra.iter().map(|b| mean_and_se(b).1).collect(),
        },
        n_samples: total.count,
    })
}

/// Named moments of the bivariate exponential example with the shock on
/// the first component, with `Z_i = exp(lambda_i (-X_i - m_i))`:
/// `C_{X_i} = E[Z_i]`, `C_X = E[Z_1 Z_2]`, `C_{X_i Y} = E[Y_1 Z_i]`,
/// `C_{XY} = E[Y_1 Z_1 Z_2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpConstants {
    pub c_x1: f64,
    pub c_x2: f64,
    pub c_x: f64,
    pub c_x1y: f64,
    pub c_x2y: f64,
    pub c_xy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpShockReport {
    pub constants: ExpConstants,
    pub risk_marginal: Estimate,
    /// Vector the allocation marginal is proportional to.
    pub bracket: [f64; 2],
    /// `lambda_1 lambda_2 / det(M)`, which turns the bracket into `RA`.
    pub factor: f64,
    pub alloc_marginal: [Estimate; 2],
    pub m_matrix: [[f64; 2]; 2],
    pub v_vector: [f64; 2],
}

fn exp_constants(
    lambda: [f64; 2],
    joint: &SampleMatrix,
    m_star: &[f64],
    range: std::ops::Range<usize>,
) -> ExpConstants {
    let mut c = ExpConstants {
        c_x1: 0.0,
        c_x2: 0.0,
        c_x: 0.0,
        c_x1y: 0.0,
        c_x2y: 0.0,
        c_xy: 0.0,
    };
    let n = range.len() as f64;
    for k in range {
        let r = joint.row(k);
        let z1 = (lambda[0] * (-r[0] - m_star[0])).exp();
        let z2 = (lambda[1] * (-r[1] - m_star[1])).exp();
        let y = r[2];
        c.c_x1 += z1;
        c.c_x2 += z2;
        c.c_x += z1 * z2;
        c.c_x1y += y * z1;
        c.c_x2y += y * z2;
        c.c_xy += y * z1 * z2;
    }
    c.c_x1 /= n;
    c.c_x2 /= n;
    c.c_x /= n;
    c.c_x1y /= n;
    c.c_x2y /= n;
    c.c_xy /= n;
    c
}

struct ExpFormulas {
    risk: f64,
    bracket: [f64; 2],
    factor: f64,
    ra: [f64; 2],
    m: [[f64; 2]; 2],
    v: [f64; 2],
}

fn exp_formulas(lambda: [f64; 2], alpha: f64, c: &ExpConstants) -> ExpFormulas {
    let [l1, l2] = lambda;
    let m = [
        [
            l1 * c.c_x1 + alpha * l1 * l1 * c.c_x,
            alpha * l1 * l2 * c.c_x,
        ],
        [
            alpha * l1 * l2 * c.c_x,
            l2 * c.c_x2 + alpha * l2 * l2 * c.c_x,
        ],
    ];
    let v = [
        -l1 * c.c_x1y - alpha * l1 * l1 * c.c_xy,
        -alpha * l1 * l2 * c.c_xy,
    ];
    let bracket = [
        -c.c_x2 * c.c_x1y - alpha * (l1 * c.c_x2 * c.c_xy + l2 * c.c_x * c.c_x1y),
        -alpha * (l1 * c.c_x1 * c.c_xy - l1 * c.c_x * c.c_x1y),
    ];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let factor = l1 * l2 / det;
    ExpFormulas {
        risk: -c.c_x1y - alpha * l1 * c.c_xy,
        bracket,
        factor,
        ra: [factor * bracket[0], factor * bracket[1]],
        m,
        v,
    }
}

/// The bivariate exponential example evaluated through its named moments.
/// The shock acts on the first component only; `Y_2` must vanish.
pub fn exp_shock_closed_form(
    spec: &LossSpec,
    joint: &SampleMatrix,
    m_star: &[f64],
) -> Result<ExpShockReport, SensitivityError> {
    if spec.family() != LossFamily::Exponential || spec.dim() != 2 {
        return Err(SensitivityError::NotApplicable);
    }
    split_joint(joint, 2)?;
    if m_star.len() != 2 {
        return Err(SensitivityError::DimensionMismatch {
            expected: 2,
            actual: m_star.len(),
        });
    }
    if joint.rows() < 2 {
        return Err(SensitivityError::TooFewSamples {
            needed: 2,
            got: joint.rows(),
        });
    }
    if joint.iter_rows().any(|r| r[3] != 0.0) {
        log::warn!("closed form ignores the shock on the second component");
    }
    let lambda = [spec.params()[0], spec.params()[1]];
    let alpha = spec.alpha();
    let all = exp_formulas(
        lambda,
        alpha,
        &exp_constants(lambda, joint, m_star, 0..joint.rows()),
    );
    let per_batch: Vec<ExpFormulas> = batch_ranges(joint.rows(), DEFAULT_BATCHES)
        .into_par_iter()
        .map(|r| exp_formulas(lambda, alpha, &exp_constants(lambda, joint, m_star, r)))
        .collect();
    let se = |f: &dyn Fn(&ExpFormulas) -> f64| {
        mean_and_se(&per_batch.iter().map(f).collect::<Vec<_>>()).1
    };
    Ok(ExpShockReport {
        constants: exp_constants(lambda, joint, m_star, 0..joint.rows()),
        risk_marginal: Estimate {
            value: all.risk,
            se: se(&|f| f.risk),
        },
        bracket: all.bracket,
        factor: all.factor,
        alloc_marginal: [
            Estimate {
                value: all.ra[0],
                se: se(&|f| f.ra[0]),
            },
            Estimate {
                value: all.ra[1],
                se: se(&|f| f.ra[1]),
            },
        ],
        m_matrix: all.m,
        v_vector: all.v,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle_bench::{oracle_allocation, GaussianExpCase};
    use crate::scenarios::GaussianModel;

    fn case(alpha: f64, rho: f64) -> (LossSpec, ScenarioModel, Vec<f64>) {
        let c = GaussianExpCase::new([1.0, 2.0], alpha, [1.0, 1.0], rho).unwrap();
        let m = oracle_allocation(&c).unwrap().m_star.to_vec();
        (c.loss(), c.model().into(), m)
    }

    #[test]
    fn deterministic_shock_is_causal() {
        let (spec, model, m) = case(1.0, 0.5);
        let shock = ShockModel::Deterministic {
            value: vec![0.7, 0.0],
        };
        let joint = shock
            .sample_joint(&model, &mut RngStream::new(1), 200_000)
            .unwrap();
        let r = alloc_marginal(&spec, &joint, &m).unwrap();
        assert!((r.alloc_marginal[0] + 0.7).abs() < 1e-10);
        assert!(r.alloc_marginal[1].abs() < 1e-10);
        assert!((r.risk_marginal + 0.7).abs() < 3.0 * r.se.risk_marginal);
    }

    #[test]
    fn independent_shock_gives_minus_mean() {
        let (spec, model, m) = case(1.0, -0.5);
        let y: ScenarioModel = GaussianModel::new(
            vec![0.3, -0.4],
            DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.1, 0.2]),
        )
        .unwrap()
        .into();
        let shock = ShockModel::Independent { model: y };
        let joint = shock
            .sample_joint(&model, &mut RngStream::new(2), 400_000)
            .unwrap();
        let r = alloc_marginal(&spec, &joint, &m).unwrap();
        let ey = shock.mean(&model);
        for j in 0..2 {
            let err = (r.alloc_marginal[j] + ey[j]).abs();
            assert!(
                err < 3.0 * r.se.alloc_marginal[j],
                "component {j}: {err} vs {}",
                r.se.alloc_marginal[j]
            );
        }
        let rm = risk_marginal(&spec, &joint, &m).unwrap();
        assert!((rm.value + ey[0] + ey[1]).abs() < 3.0 * rm.se);
    }

    #[test]
    fn opposite_independent_shocks_cancel() {
        let (spec, model, m) = case(1.0, 0.2);
        // Y_2 = -Y_1 with Y_1 ~ N(0.4, 1): a rank-one Gaussian
        let y: ScenarioModel = GaussianModel::new(
            vec![0.4, -0.4],
            DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]),
        )
        .unwrap()
        .into();
        let joint = ShockModel::Independent { model: y }
            .sample_joint(&model, &mut RngStream::new(3), 200_000)
            .unwrap();
        let rm = risk_marginal(&spec, &joint, &m).unwrap();
        assert!(rm.value.abs() < 3.0 * rm.se, "{rm:?}");
    }

    #[test]
    fn uncoupled_first_component_shock_leaves_second_allocation() {
        let (spec, model, m) = case(0.0, 0.7);
        let shock = ShockModel::ComponentCorrelated {
            scale: vec![1.0, 0.0],
            shift: vec![0.0, 0.0],
        };
        let joint = shock
            .sample_joint(&model, &mut RngStream::new(4), 200_000)
            .unwrap();
        let r = alloc_marginal(&spec, &joint, &m).unwrap();
        assert!(r.alloc_marginal[1].abs() < 3.0 * r.se.alloc_marginal[1] + 1e-12);
        let cf = exp_shock_closed_form(&spec, &joint, &m).unwrap();
        assert!((cf.risk_marginal.value + cf.constants.c_x1y).abs() < 1e-15);
    }

    #[test]
    fn ra_solves_the_linear_system() {
        let (spec, model, m) = case(1.0, 0.3);
        let shock = ShockModel::ComponentCorrelated {
            scale: vec![0.5, 0.0],
            shift: vec![0.1, 0.0],
        };
        let joint = shock
            .sample_joint(&model, &mut RngStream::new(5), 50_000)
            .unwrap();
        let r = alloc_marginal(&spec, &joint, &m).unwrap();
        let resid = r.m() * DVector::from_vec(r.alloc_marginal.clone())
            - DVector::from_vec(r.v_vector.clone());
        assert!(resid.abs().max() < 1e-12);
        let eig = r.m().symmetric_eigen().eigenvalues;
        assert!(eig.min() > 0.0);
    }

    #[test]
    fn closed_form_matches_generic_path_on_the_same_sample() {
        let (spec, model, m) = case(1.0, 0.5);
        let shock = ShockModel::ComponentCorrelated {
            scale: vec![1.0, 0.0],
            shift: vec![0.0, 0.0],
        };
        let joint = shock
            .sample_joint(&model, &mut RngStream::new(6), 100_000)
            .unwrap();
        let g = alloc_marginal(&spec, &joint, &m).unwrap();
        let c = exp_shock_closed_form(&spec, &joint, &m).unwrap();
        for j in 0..2 {
            assert!((g.alloc_marginal[j] - c.alloc_marginal[j].value).abs() < 1e-9);
            assert!((g.v_vector[j] - c.v_vector[j]).abs() < 1e-9);
            for k in 0..2 {
                assert!((g.m_matrix[j][k] - c.m_matrix[j][k]).abs() < 1e-9);
            }
        }
        assert!((g.risk_marginal - c.risk_marginal.value).abs() < 1e-9);
        // the bracket is parallel to RA
        let cross = c.bracket[0] * g.alloc_marginal[1] - c.bracket[1] * g.alloc_marginal[0];
        assert!(cross.abs() < 1e-9 * (1.0 + c.bracket[0].abs()));
    }

    #[test]
    fn zero_shock_gives_zero_marginals() {
        let (spec, model, m) = case(1.0, 0.0);
        let joint = ShockModel::Deterministic {
            value: vec![0.0, 0.0],
        }
        .sample_joint(&model, &mut RngStream::new(7), 10_000)
        .unwrap();
        let r = alloc_marginal(&spec, &joint, &m).unwrap();
        assert_eq!(r.risk_marginal, 0.0);
        assert!(r.alloc_marginal.iter().all(|v| *v == 0.0));
        let c = exp_shock_closed_form(&spec, &joint, &m).unwrap();
        assert_eq!(c.risk_marginal.value, 0.0);
        assert!(c.alloc_marginal.iter().all(|e| e.value == 0.0));
    }

    #[test]
    fn positive_part_family_is_rejected_for_allocations() {
        let spec = LossSpec::cvar_coupled(vec![0.05, 0.05], 0.0).unwrap();
        let model: ScenarioModel = GaussianModel::bivariate(1.0, 1.0, 0.0).unwrap().into();
        let joint = ShockModel::Deterministic {
            value: vec![1.0, 0.0],
        }
        .sample_joint(&model, &mut RngStream::new(8), 1000)
        .unwrap();
        assert!(matches!(
            alloc_marginal(&spec, &joint, &[1.0, 1.0]),
            Err(SensitivityError::Loss(
                LossError::NotTwiceDifferentiable { .. }
            ))
        ));
        assert!(risk_marginal(&spec, &joint, &[1.0, 1.0]).is_ok());
    }

    #[test]
    fn singular_hessian_is_reported() {
        let spec = LossSpec::exponential(vec![1.0, 1.0], 0.0).unwrap();
        // far in the left tail every Hessian entry underflows
        let model: ScenarioModel = GaussianModel::new(vec![2000.0, 2000.0], DMatrix::zeros(2, 2))
            .unwrap()
            .into();
        let joint = ShockModel::Deterministic {
            value: vec![1.0, 0.0],
        }
        .sample_joint(&model, &mut RngStream::new(9), 100)
        .unwrap();
        assert!(matches!(
            alloc_marginal(&spec, &joint, &[0.0, 0.0]),
            Err(SensitivityError::SingularSensitivity { .. })
        ));
    }
}
