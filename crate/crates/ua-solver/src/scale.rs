use serde::{Deserialize, Serialize};

use crate::error::{Result, UaError};

/// Ordered time-scale parameters eps_1 >= eps_2 >= ... >= eps_n > 0.
///
/// Index 1 is the coarsest fast scale, index n the finest. Entries may exceed
/// one (problems that fold a 2*pi phase normalization into the scales produce
/// such values); accuracy of the scheme degrades as eps_1 approaches O(1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ScaleVector {
    eps: Vec<f64>,
}

impl ScaleVector {
    pub fn new(eps: Vec<f64>) -> Result<Self> {
        if eps.is_empty() {
            return Err(UaError::InvalidScales("needs at least one scale".into()));
        }
        for (i, &e) in eps.iter().enumerate() {
            if !e.is_finite() || e <= 0.0 {
                return Err(UaError::InvalidScales(format!("eps_{} = {e} is not positive", i + 1)));
            }
        }
        if eps.windows(2).any(|w| w[1] > w[0]) {
            return Err(UaError::InvalidScales(format!("scales must be nonincreasing, got {eps:?}")));
        }
        Ok(Self { eps })
    }

    pub fn n(&self) -> usize {
        self.eps.len()
    }

    pub fn eps(&self) -> &[f64] {
        &self.eps
    }

    /// eps_k for 1-based level k.
    pub fn level(&self, k: usize) -> f64 {
        self.eps[k - 1]
    }

    pub fn finest(&self) -> f64 {
        *self.eps.last().unwrap()
    }

    /// Separation ratios eps_k / eps_{k-1} for k = 2..n.
    pub fn ratios(&self) -> Vec<f64> {
        self.eps.windows(2).map(|w| w[1] / w[0]).collect()
    }

    /// Fast phases (t/eps_k) mod 1.
    ///
    /// t is reduced modulo eps_k before the division; dividing first loses
    /// most of the phase once t/eps_k exceeds ~1e10.
    pub fn phases(&self, t: f64) -> Vec<f64> {
        self.eps.iter().map(|&e| reduced_phase(t, e)).collect()
    }
}

impl TryFrom<Vec<f64>> for ScaleVector {
    type Error = UaError;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ScaleVector> for Vec<f64> {
    fn from(s: ScaleVector) -> Self {
        s.eps
    }
}

/// (t/eps) mod 1 via exact remainder reduction.
pub fn reduced_phase(t: f64, eps: f64) -> f64 {
    let mut tau = t.rem_euclid(eps) / eps;
    if tau >= 1.0 {
        tau -= 1.0;
    }
    tau
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accepts_ordered_scales() {
        let s = ScaleVector::new(vec![1e-1, 1e-2, 1e-4]).unwrap();
        assert_eq!(s.n(), 3);
        assert_eq!(s.finest(), 1e-4);
        assert_eq!(s.ratios(), vec![0.1, 1e-2]);
    }

    #[test]
    fn rejects_unordered_or_nonpositive() {
        assert!(ScaleVector::new(vec![1e-2, 1e-1]).is_err());
        assert!(ScaleVector::new(vec![0.0]).is_err());
        assert!(ScaleVector::new(vec![]).is_err());
        assert!(ScaleVector::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn phase_at_zero_is_zero() {
        let s = ScaleVector::new(vec![1e-1, 1e-3]).unwrap();
        assert_eq!(s.phases(0.0), vec![0.0, 0.0]);
    }

    #[test]
    fn reduced_phase_keeps_precision_at_tiny_scales() {
        // t/eps ~ 1.6e11 would leave ~2e-5 of absolute phase error if the
        // division happened first; the reduced form is exact to a few ulps.
        let eps = 6.28e-12;
        let t = 1.0;
        let tau = reduced_phase(t, eps);
        assert!((0.0..1.0).contains(&tau));
        // consistency: t = (k + tau) * eps for integer k
        let k = ((t / eps) - tau).round();
        assert!(((k + tau) * eps - t).abs() <= 4.0 * f64::EPSILON * t.abs());
    }

    #[test]
    fn phases_are_in_unit_interval() {
        let s = ScaleVector::new(vec![7e-2, 11e-5]).unwrap();
        for i in 0..1000 {
            let t = i as f64 * 0.003;
            for tau in s.phases(t) {
                assert!((0.0..1.0).contains(&tau), "tau = {tau} at t = {t}");
            }
        }
    }
}
