use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Result, UaError};

/// A vector field f(t_1, ..., t_n, x) that is 1-periodic in each phase t_k
/// and autonomous apart from the phases.
///
/// Phase slices handed to [`MultiscaleField::eval`] are expected in [0, 1];
/// callers reduce times to phases via [`crate::ScaleVector::phases`].
#[derive(Clone)]
pub struct MultiscaleField {
    dim: usize,
    num_phases: usize,
    eval_fn: Arc<dyn Fn(&[f64], &DVector<f64>) -> DVector<f64> + Send + Sync>,
}

impl MultiscaleField {
    pub fn new<F>(dim: usize, num_phases: usize, f: F) -> Self
    where
        F: Fn(&[f64], &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        Self { dim, num_phases, eval_fn: Arc::new(f) }
    }

    /// State dimension d.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of fast phases n.
    pub fn num_phases(&self) -> usize {
        self.num_phases
    }

    pub fn eval(&self, tau: &[f64], x: &DVector<f64>) -> DVector<f64> {
        debug_assert_eq!(tau.len(), self.num_phases);
        (self.eval_fn)(tau, x)
    }

    /// Evaluation that reports non-finite output as an error carrying the
    /// offending point.
    pub fn eval_checked(&self, tau: &[f64], x: &DVector<f64>) -> Result<DVector<f64>> {
        let v = self.eval(tau, x);
        if v.iter().all(|c| c.is_finite()) {
            Ok(v)
        } else {
            Err(UaError::Evaluation { phases: tau.to_vec(), x: x.iter().copied().collect() })
        }
    }
}

impl std::fmt::Debug for MultiscaleField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MultiscaleField")
            .field("dim", &self.dim)
            .field("num_phases", &self.num_phases)
            .finish()
    }
}

/// Reparametrizes the two finest phases t_{n-1}, t_n with eps_n = (m1/m2) eps_{n-1}
/// as a single 1-periodic coordinate sigma, giving a field with n-1 phases.
///
/// One period of sigma covers m1 periods of t_{n-1} and m2 of t_n; the caller
/// pairs the result with the effective scale vector
/// (eps_1, ..., eps_{n-2}, m1 * eps_{n-1}).
pub fn collapse_rational(field: &MultiscaleField, m1: u32, m2: u32) -> Result<MultiscaleField> {
    if m1 == 0 || m2 == 0 {
        return Err(UaError::InvalidConfig(format!(
            "rational collapse needs positive integers, got m1 = {m1}, m2 = {m2}"
        )));
    }
    let n = field.num_phases();
    if n < 2 {
        return Err(UaError::InvalidConfig("collapse needs at least two phases".into()));
    }
    let inner = field.clone();
    let (m1f, m2f) = (f64::from(m1), f64::from(m2));
    Ok(MultiscaleField::new(field.dim(), n - 1, move |tau, x| {
        let sigma = tau[n - 2];
        let mut full = Vec::with_capacity(n);
        full.extend_from_slice(&tau[..n - 2]);
        full.push((m1f * sigma).fract());
        full.push((m2f * sigma).fract());
        inner.eval(&full, x)
    }))
}
