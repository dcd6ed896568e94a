use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::OracleError;
use crate::losses::LossSpec;
use crate::scenarios::GaussianModel;

/// Bivariate Gaussian scenario under the coupled exponential loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianExpCase {
    pub lambda: [f64; 2],
    pub alpha: f64,
    pub sigma: [f64; 2],
    pub rho: f64,
    /// Mean of `X`; the allocation shifts by `-mean`.
    #[serde(default)]
    pub mean: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleAllocation {
    pub m_star: [f64; 2],
    pub risk: f64,
}

impl GaussianExpCase {
    pub fn new(
        lambda: [f64; 2],
        alpha: f64,
        sigma: [f64; 2],
        rho: f64,
    ) -> Result<Self, OracleError> {
        let c = GaussianExpCase {
            lambda,
            alpha,
            sigma,
            rho,
            mean: [0.0, 0.0],
        };
        c.validate()?;
        Ok(c)
    }

    pub fn with_mean(mut self, mean: [f64; 2]) -> Self {
        self.mean = mean;
        self
    }

    pub fn validate(&self) -> Result<(), OracleError> {
        let bad = |msg: String| Err(OracleError::InvalidCase(msg));
        if !self.lambda.iter().all(|l| *l > 0.0 && l.is_finite()) {
            return bad(format!("lambda must be positive, got {:?}", self.lambda));
        }
        if !self.sigma.iter().all(|s| *s > 0.0 && s.is_finite()) {
            return bad(format!("sigma must be positive, got {:?}", self.sigma));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be nonnegative, got {}", self.alpha));
        }
        if !(self.rho > -1.0 && self.rho < 1.0) {
            return bad(format!("rho must lie in (-1, 1), got {}", self.rho));
        }
        if !self.mean.iter().all(|m| m.is_finite()) {
            return bad("mean must be finite".into());
        }
        Ok(())
    }

    pub fn loss(&self) -> LossSpec {
        LossSpec::exponential(self.lambda.to_vec(), self.alpha).expect("validated case")
    }

    pub fn model(&self) -> GaussianModel {
        let [s1, s2] = self.sigma;
        let c = self.rho * s1 * s2;
        GaussianModel::new(
            self.mean.to_vec(),
            DMatrix::from_row_slice(2, 2, &[s1 * s1, c, c, s2 * s2]),
        )
        .expect("validated case")
    }

    /// `exp(rho sigma_1 sigma_2 lambda_1 lambda_2)`.
    fn coupling_factor(&self) -> f64 {
        (self.rho * self.sigma[0] * self.sigma[1] * self.lambda[0] * self.lambda[1]).exp()
    }
}

/// Positive root of
/// `alpha lambda_j E X^2 + (1 + alpha (lambda_i - lambda_j) E) X - 1 = 0`
/// with `E = exp(rho sigma_i sigma_j lambda_i lambda_j)`.
pub fn solve_sc(case: &GaussianExpCase, i: usize, j: usize) -> Result<f64, OracleError> {
    case.validate()?;
    if case.alpha == 0.0 {
        return Err(OracleError::NotApplicable(
            "the quadratic degenerates when alpha = 0".into(),
        ));
    }
    if i == j || i > 1 || j > 1 {
        return Err(OracleError::NotApplicable(format!(
            "indices must be 0 and 1 in some order, got ({i}, {j})"
        )));
    }
    let e = case.coupling_factor();
    let a = case.alpha * case.lambda[j] * e;
    let b = 1.0 + case.alpha * (case.lambda[i] - case.lambda[j]) * e;
    let c = -1.0;
    let disc = (b * b - 4.0 * a * c).sqrt();
    let q = -0.5 * (b + b.signum() * disc);
    // the roots are q / a and c / q with opposite signs
    Ok(if b >= 0.0 { c / q } else { q / a })
}

/// Closed-form optimal allocation and risk.
///
/// With `A_i = E[exp(-lambda_i (X_i + m_i))]` the first-order conditions
/// give `A_1 = SC_12`, `A_2 = SC_21`, and the risk is the exact expectation
/// `m_1 + m_2 + sum (A_i - 1) / lambda_i + alpha A_1 A_2 E`.
pub fn oracle_allocation(case: &GaussianExpCase) -> Result<OracleAllocation, OracleError> {
    case.validate()?;
    let l = case.lambda;
    let s = case.sigma;
    let base = [l[0] * s[0] * s[0] / 2.0, l[1] * s[1] * s[1] / 2.0];
    let (m, risk_offset) = if case.alpha == 0.0 {
        (base, 0.0)
    } else {
        let a1 = solve_sc(case, 0, 1)?;
        let a2 = solve_sc(case, 1, 0)?;
        let m = [base[0] - a1.ln() / l[0], base[1] - a2.ln() / l[1]];
        let offset =
            (a1 - 1.0) / l[0] + (a2 - 1.0) / l[1] + case.alpha * a1 * a2 * case.coupling_factor();
        (m, offset)
    };
    let m_star = [m[0] - case.mean[0], m[1] - case.mean[1]];
    Ok(OracleAllocation {
        m_star,
        risk: m_star[0] + m_star[1] + risk_offset,
    })
}

/// Entropic risk on an empirical sample: `w* = (1/lambda) ln mean(exp(-lambda X))`;
/// the optimal cash and the risk coincide.
pub fn entropic_univariate(lambda: f64, samples: &[f64]) -> Result<(f64, f64), OracleError> {
    if samples.is_empty() {
        return Err(OracleError::EmptySamples);
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(OracleError::InvalidCase(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(OracleError::NonFiniteObjective);
    }
    let top = samples
        .iter()
        .map(|x| -lambda * x)
        .fold(f64::NEG_INFINITY, f64::max);
    let mean = samples
        .iter()
        .map(|x| (-lambda * x - top).exp())
        .sum::<f64>()
        / samples.len() as f64;
    let w = (top + mean.ln()) / lambda;
    Ok((w, w))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn case(lambda: [f64; 2], alpha: f64, rho: f64) -> GaussianExpCase {
        GaussianExpCase::new(lambda, alpha, [1.0, 1.0], rho).unwrap()
    }

    #[test]
    fn sc_golden_ratio() {
        let sc = solve_sc(&case([1.0, 1.0], 1.0, 0.0), 0, 1).unwrap();
        assert!((sc - (5f64.sqrt() - 1.0) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn sc_symmetric_when_lambdas_equal() {
        let c = case([1.5, 1.5], 0.7, 0.4);
        assert!((solve_sc(&c, 0, 1).unwrap() - solve_sc(&c, 1, 0).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn sc_is_a_positive_root() {
        for &(l1, l2, a, r) in &[
            (1.0, 2.0, 1.0, -0.9),
            (3.0, 0.5, 2.0, 0.5),
            (0.2, 4.0, 0.1, 0.9),
        ] {
            let c = case([l1, l2], a, r);
            for (i, j) in [(0, 1), (1, 0)] {
                let x = solve_sc(&c, i, j).unwrap();
                let e = c.coupling_factor();
                let lam = c.lambda;
                let resid = a * lam[j] * e * x * x + (1.0 + a * (lam[i] - lam[j]) * e) * x - 1.0;
                assert!(x > 0.0 && resid.abs() < 1e-12);
                let other = -1.0 / (a * lam[j] * e * x);
                assert!(other < 0.0);
            }
        }
    }

    #[test]
    fn sc_needs_coupling() {
        assert!(matches!(
            solve_sc(&case([1.0, 2.0], 0.0, 0.0), 0, 1),
            Err(OracleError::NotApplicable(_))
        ));
    }

    #[test]
    fn uncoupled_allocation() {
        let o = oracle_allocation(&case([1.0, 2.0], 0.0, 0.3)).unwrap();
        assert_eq!(o.m_star, [0.5, 1.0]);
        assert_eq!(o.risk, 1.5);
    }

    #[test]
    fn published_coupled_allocations() {
        let o = oracle_allocation(&case([1.0, 1.0], 1.0, 0.0)).unwrap();
        assert!((o.m_star[0] - 0.9812).abs() < 1e-4 && (o.m_star[1] - 0.9812).abs() < 1e-4);
        assert!((o.risk - 1.5804).abs() < 1e-4);
        let o = oracle_allocation(&case([1.0, 2.0], 1.0, -0.9)).unwrap();
        assert!((o.m_star[0] - 0.6202).abs() < 1e-4);
        assert!((o.m_star[1] - 1.1285).abs() < 1e-4);
        assert!((o.risk - 1.6354).abs() < 1e-4);
    }

    #[test]
    fn both_risk_forms_agree() {
        for &(l1, l2, a, r) in &[
            (1.0, 2.0, 1.0, -0.5),
            (2.0, 0.7, 0.3, 0.8),
            (1.0, 1.0, 2.5, 0.0),
        ] {
            let c = case([l1, l2], a, r);
            let s12 = solve_sc(&c, 0, 1).unwrap();
            let s21 = solve_sc(&c, 1, 0).unwrap();
            assert!(((s12 - 1.0) / l1 - (s21 - 1.0) / l2).abs() < 1e-10);
            assert!(
                (((2.0 - a) / l1) * (s12 - 1.0) - ((2.0 - a) / l2) * (s21 - 1.0)).abs() < 1e-10
            );
        }
    }

    #[test]
    fn risk_is_the_objective_at_the_optimum() {
        // the objective is a sum of lognormal moments, evaluated term by term
        let c = case([1.0, 2.0], 0.6, 0.3);
        let o = oracle_allocation(&c).unwrap();
        let [l1, l2] = c.lambda;
        let [m1, m2] = o.m_star;
        let e1 = (l1 * l1 / 2.0 - l1 * m1).exp();
        let e2 = (l2 * l2 / 2.0 - l2 * m2).exp();
        let joint = e1 * e2 * (0.3 * l1 * l2).exp();
        let objective = m1 + m2 + (e1 - 1.0) / l1 + (e2 - 1.0) / l2 + 0.6 * joint;
        assert!((objective - o.risk).abs() < 1e-12);
        // first-order conditions
        assert!((e1 + 0.6 * l1 * joint - 1.0).abs() < 1e-12);
        assert!((e2 + 0.6 * l2 * joint - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mean_shifts_allocation_and_risk() {
        let c = case([1.0, 2.0], 1.0, 0.5);
        let base = oracle_allocation(&c).unwrap();
        let shifted = oracle_allocation(&c.with_mean([0.3, -0.2])).unwrap();
        assert!((shifted.m_star[0] - (base.m_star[0] - 0.3)).abs() < 1e-14);
        assert!((shifted.m_star[1] - (base.m_star[1] + 0.2)).abs() < 1e-14);
        assert!((shifted.risk - (base.risk - 0.1)).abs() < 1e-13);
    }

    #[test]
    fn invalid_cases() {
        assert!(GaussianExpCase::new([0.0, 1.0], 0.0, [1.0, 1.0], 0.0).is_err());
        assert!(GaussianExpCase::new([1.0, 1.0], -1.0, [1.0, 1.0], 0.0).is_err());
        assert!(GaussianExpCase::new([1.0, 1.0], 0.0, [1.0, 1.0], 1.0).is_err());
    }

    #[test]
    fn entropic_of_constant() {
        let (w, r) = entropic_univariate(2.0, &[0.7; 10]).unwrap();
        assert!((w + 0.7).abs() < 1e-15 && w == r);
        assert!(entropic_univariate(1.0, &[]).is_err());
    }

    #[test]
    fn entropic_gaussian_limit() {
        use crate::scenarios::{RngStream, Sampler};
        let m = GaussianModel::new(vec![0.0], DMatrix::from_element(1, 1, 0.25)).unwrap();
        let xs = m.sample(&mut RngStream::new(1), 1_000_000);
        let (w, _) = entropic_univariate(1.5, xs.as_slice()).unwrap();
        assert!((w - 1.5 * 0.25 / 2.0).abs() < 5e-3, "{w}");
    }

    #[test]
    fn entropic_tends_to_worst_case() {
        let xs = [0.3, -1.2, 0.8, 2.0];
        let mut prev = f64::NEG_INFINITY;
        for &l in &[0.1, 1.0, 10.0, 100.0, 1000.0] {
            let (w, _) = entropic_univariate(l, &xs).unwrap();
            assert!(w >= prev && w <= 1.2 + 1e-12);
            prev = w;
        }
        assert!((prev - 1.2).abs() < 1e-2);
    }
}
