use serde::{Deserialize, Serialize};

use super::SaError;

/// Step sequence `gamma_n = c / (n + 1)^gamma`, averaging window scale `t`
/// and iteration budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StepSchedule {
    pub c: f64,
    pub gamma: f64,
    pub t: f64,
    pub n_iter: usize,
}

impl Default for StepSchedule {
    fn default() -> Self {
        StepSchedule {
            c: 1.0,
            gamma: 0.8,
            t: 10.0,
            n_iter: 500_000,
        }
    }
}

impl StepSchedule {
    pub fn new(c: f64, gamma: f64, t: f64, n_iter: usize) -> Result<Self, SaError> {
        let s = StepSchedule {
            c,
            gamma,
            t,
            n_iter,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), SaError> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(SaError::InvalidSchedule(format!(
                "c must be positive, got {}",
                self.c
            )));
        }
        if !(self.gamma > 0.5 && self.gamma <= 1.0) {
            return Err(SaError::InvalidSchedule(format!(
                "gamma must lie in (1/2, 1], got {}",
                self.gamma
            )));
        }
        if !(self.t > 0.0 && self.t.is_finite()) {
            return Err(SaError::InvalidSchedule(format!(
                "t must be positive, got {}",
                self.t
            )));
        }
        if self.n_iter == 0 {
            return Err(SaError::InvalidSchedule("n_iter must be at least 1".into()));
        }
        Ok(())
    }

    /// Step size used to move from iterate `n` to iterate `n + 1`.
    #[inline]
    pub fn step(&self, n: usize) -> f64 {
        self.c / ((n + 1) as f64).powf(self.gamma)
    }

    /// Averaging window length `floor(t / gamma_n)`, at least 1.
    pub fn window_len(&self, n: usize) -> usize {
        ((self.t / self.step(n)).floor() as usize).max(1)
    }

    /// Largest `n` whose window `[n, n + L(n) - 1]` ends at or before
    /// `last`. `None` when even the window at 0 is longer than the run.
    pub fn anchor(&self, last: usize) -> Option<usize> {
        let fits = |n: usize| n + self.window_len(n) - 1 <= last;
        if !fits(0) {
            return None;
        }
        let (mut lo, mut hi) = (0usize, last);
        while lo < hi {
            let mid = lo + (hi - lo).div_ceil(2);
            if fits(mid) {
                lo = mid;
            } else {
                hi = mid - 1;
            }
        }
        Some(lo)
    }
}

/// Hyperrectangle `K = [lower, upper]` the iterates are projected onto.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxConstraint {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxConstraint {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, SaError> {
        let b = BoxConstraint { lower, upper };
        b.validate()?;
        Ok(b)
    }

    /// The cube `[lo, hi]^d`.
    pub fn cube(d: usize, lo: f64, hi: f64) -> Result<Self, SaError> {
        Self::new(vec![lo; d], vec![hi; d])
    }

    pub fn validate(&self) -> Result<(), SaError> {
        if self.lower.len() != self.upper.len() || self.lower.is_empty() {
            return Err(SaError::InvalidBox(format!(
                "lower and upper must have the same positive length, got {} and {}",
                self.lower.len(),
                self.upper.len()
            )));
        }
        for (i, (l, u)) in self.lower.iter().zip(&self.upper).enumerate() {
            if !(l < u) {
                return Err(SaError::InvalidBox(format!(
                    "lower[{i}] = {l} must be below upper[{i}] = {u}"
                )));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, m: &[f64]) -> bool {
        m.len() == self.dim()
            && m.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| *l <= *v && *v <= *u)
    }

    /// Componentwise clamp. Returns whether any coordinate moved.
    #[inline]
    pub fn project(&self, m: &mut [f64]) -> bool {
        let mut hit = false;
        for (v, (l, u)) in m.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            if *v < *l {
                *v = *l;
                hit = true;
            } else if *v > *u {
                *v = *u;
                hit = true;
            }
        }
        hit
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn steps_start_at_c() {
        let s = StepSchedule::new(2.0, 0.8, 10.0, 100).unwrap();
        assert_eq!(s.step(0), 2.0);
        assert!((s.step(9) - 2.0 / 10f64.powf(0.8)).abs() < 1e-15);
    }

    #[test]
    fn schedule_validation() {
        assert!(StepSchedule::new(1.0, 0.5, 10.0, 10).is_err());
        assert!(StepSchedule::new(1.0, 1.0, 10.0, 10).is_ok());
        assert!(StepSchedule::new(0.0, 0.8, 10.0, 10).is_err());
        assert!(StepSchedule::new(1.0, 0.8, 0.0, 10).is_err());
        assert!(StepSchedule::new(1.0, 0.8, 1.0, 0).is_err());
    }

    #[test]
    fn anchor_is_the_last_window_that_fits() {
        let s = StepSchedule::default();
        let a = s.anchor(s.n_iter).unwrap();
        assert!(a + s.window_len(a) - 1 <= s.n_iter);
        assert!(a + 1 + s.window_len(a + 1) - 1 > s.n_iter);
    }

    #[test]
    fn anchor_missing_when_run_too_short() {
        let s = StepSchedule::new(0.01, 0.8, 10.0, 50).unwrap();
        assert_eq!(s.window_len(0), 1000);
        assert_eq!(s.anchor(50), None);
    }

    #[test]
    fn projection_clamps() {
        let b = BoxConstraint::cube(2, 0.0, 3.0).unwrap();
        let mut m = [-1.0, 2.0];
        assert!(b.project(&mut m));
        assert_eq!(m, [0.0, 2.0]);
        assert!(!b.project(&mut m));
        assert!(BoxConstraint::new(vec![1.0], vec![1.0]).is_err());
    }
}
