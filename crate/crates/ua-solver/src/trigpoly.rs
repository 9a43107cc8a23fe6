//! Exact algebra for fields whose components are trigonometric polynomials in
//! the fast phases with polynomial coefficients in the state.
//!
//! A [`TrigPoly`] is a finite sum of Fourier modes
//! `(re(x) + i im(x)) * exp(2 pi i m . tau)` over integer frequency vectors
//! `m`, with real multivariate polynomials `re`, `im` in the state `x`.
//! Products convolve frequencies, so expressions entered in the natural
//! `cos/sin` form linearize automatically. Phase means, fluctuations,
//! antiderivatives in a phase, and state derivatives are all closed-form
//! operations on the mode table, which is what makes the analytic
//! decomposition provider exact.

use std::collections::BTreeMap;

use nalgebra::DVector;

/// Sparse multivariate polynomial with f64 coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly {
    nvars: usize,
    /// exponent vector -> coefficient; exact zeros are pruned
    terms: BTreeMap<Vec<u8>, f64>,
}

impl Poly {
    pub fn zero(nvars: usize) -> Self {
        Self { nvars, terms: BTreeMap::new() }
    }

    pub fn constant(nvars: usize, c: f64) -> Self {
        let mut p = Self::zero(nvars);
        if c != 0.0 {
            p.terms.insert(vec![0; nvars], c);
        }
        p
    }

    pub fn var(nvars: usize, j: usize) -> Self {
        assert!(j < nvars);
        let mut exp = vec![0u8; nvars];
        exp[j] = 1;
        let mut p = Self::zero(nvars);
        p.terms.insert(exp, 1.0);
        p
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    fn add_term(&mut self, exp: Vec<u8>, c: f64) {
        if c == 0.0 {
            return;
        }
        match self.terms.get_mut(&exp) {
            Some(v) => {
                *v += c;
                if *v == 0.0 {
                    self.terms.remove(&exp);
                }
            }
            None => {
                self.terms.insert(exp, c);
            }
        }
    }

    pub fn add(&self, other: &Poly) -> Poly {
        assert_eq!(self.nvars, other.nvars);
        let mut out = self.clone();
        for (exp, &c) in &other.terms {
            out.add_term(exp.clone(), c);
        }
        out
    }

    pub fn scale(&self, s: f64) -> Poly {
        if s == 0.0 {
            return Poly::zero(self.nvars);
        }
        let mut out = self.clone();
        for v in out.terms.values_mut() {
            *v *= s;
        }
        out
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        assert_eq!(self.nvars, other.nvars);
        let mut out = Poly::zero(self.nvars);
        for (ea, &ca) in &self.terms {
            for (eb, &cb) in &other.terms {
                let exp: Vec<u8> = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                out.add_term(exp, ca * cb);
            }
        }
        out
    }

    /// Partial derivative with respect to variable j.
    pub fn diff(&self, j: usize) -> Poly {
        let mut out = Poly::zero(self.nvars);
        for (exp, &c) in &self.terms {
            if exp[j] > 0 {
                let mut e = exp.clone();
                e[j] -= 1;
                out.add_term(e, c * f64::from(exp[j]));
            }
        }
        out
    }

    pub fn eval(&self, x: &DVector<f64>) -> f64 {
        debug_assert_eq!(x.len(), self.nvars);
        self.terms
            .iter()
            .map(|(exp, &c)| {
                let mut v = c;
                for (j, &e) in exp.iter().enumerate() {
                    for _ in 0..e {
                        v *= x[j];
                    }
                }
                v
            })
            .sum()
    }
}

#[derive(Debug, Clone)]
struct ModeCoeff {
    re: Poly,
    im: Poly,
}

impl ModeCoeff {
    fn is_zero(&self) -> bool {
        self.re.is_zero() && self.im.is_zero()
    }
}

/// Trigonometric polynomial in `nphases` unit-period phases with polynomial
/// coefficients in `nvars` state variables.
#[derive(Debug, Clone)]
pub struct TrigPoly {
    nphases: usize,
    nvars: usize,
    modes: BTreeMap<Vec<i32>, ModeCoeff>,
}

impl TrigPoly {
    pub fn zero(nphases: usize, nvars: usize) -> Self {
        Self { nphases, nvars, modes: BTreeMap::new() }
    }

    pub fn constant(nphases: usize, nvars: usize, c: f64) -> Self {
        Self::from_poly(nphases, Poly::constant(nvars, c))
    }

    /// The state variable x_j as a phase-independent series.
    pub fn var(nphases: usize, nvars: usize, j: usize) -> Self {
        Self::from_poly(nphases, Poly::var(nvars, j))
    }

    fn from_poly(nphases: usize, p: Poly) -> Self {
        let nvars = p.nvars;
        let mut out = Self::zero(nphases, nvars);
        if !p.is_zero() {
            out.modes.insert(vec![0; nphases], ModeCoeff { re: p, im: Poly::zero(nvars) });
        }
        out
    }

    /// cos(2 pi tau_phase)
    pub fn cos(nphases: usize, nvars: usize, phase: usize) -> Self {
        assert!(phase < nphases);
        let mut out = Self::zero(nphases, nvars);
        for sign in [1i32, -1] {
            let mut m = vec![0; nphases];
            m[phase] = sign;
            out.modes.insert(
                m,
                ModeCoeff { re: Poly::constant(nvars, 0.5), im: Poly::zero(nvars) },
            );
        }
        out
    }

    /// sin(2 pi tau_phase)
    pub fn sin(nphases: usize, nvars: usize, phase: usize) -> Self {
        assert!(phase < nphases);
        let mut out = Self::zero(nphases, nvars);
        for sign in [1i32, -1] {
            let mut m = vec![0; nphases];
            m[phase] = sign;
            out.modes.insert(
                m,
                ModeCoeff {
                    re: Poly::zero(nvars),
                    im: Poly::constant(nvars, -0.5 * sign as f64),
                },
            );
        }
        out
    }

    fn insert(&mut self, freq: Vec<i32>, re: Poly, im: Poly) {
        match self.modes.get_mut(&freq) {
            Some(c) => {
                c.re = c.re.add(&re);
                c.im = c.im.add(&im);
                if c.is_zero() {
                    self.modes.remove(&freq);
                }
            }
            None => {
                let c = ModeCoeff { re, im };
                if !c.is_zero() {
                    self.modes.insert(freq, c);
                }
            }
        }
    }

    pub fn add(&self, other: &TrigPoly) -> TrigPoly {
        assert_eq!((self.nphases, self.nvars), (other.nphases, other.nvars));
        let mut out = self.clone();
        for (m, c) in &other.modes {
            out.insert(m.clone(), c.re.clone(), c.im.clone());
        }
        out
    }

    pub fn sub(&self, other: &TrigPoly) -> TrigPoly {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> TrigPoly {
        let mut out = TrigPoly::zero(self.nphases, self.nvars);
        for (m, c) in &self.modes {
            out.insert(m.clone(), c.re.scale(s), c.im.scale(s));
        }
        out
    }

    pub fn mul(&self, other: &TrigPoly) -> TrigPoly {
        assert_eq!((self.nphases, self.nvars), (other.nphases, other.nvars));
        let mut out = TrigPoly::zero(self.nphases, self.nvars);
        for (ma, ca) in &self.modes {
            for (mb, cb) in &other.modes {
                let freq: Vec<i32> = ma.iter().zip(mb).map(|(a, b)| a + b).collect();
                // (ra + i ia)(rb + i ib)
                let re = ca.re.mul(&cb.re).add(&ca.im.mul(&cb.im).scale(-1.0));
                let im = ca.re.mul(&cb.im).add(&ca.im.mul(&cb.re));
                out.insert(freq, re, im);
            }
        }
        out
    }

    /// Mean over one phase: keeps the modes with zero frequency there.
    pub fn mean(&self, phase: usize) -> TrigPoly {
        assert!(phase < self.nphases);
        let mut out = TrigPoly::zero(self.nphases, self.nvars);
        for (m, c) in &self.modes {
            if m[phase] == 0 {
                out.insert(m.clone(), c.re.clone(), c.im.clone());
            }
        }
        out
    }

    /// Zero-mean remainder in one phase.
    pub fn fluctuation(&self, phase: usize) -> TrigPoly {
        self.sub(&self.mean(phase))
    }

    /// Antiderivative from 0 to tau_phase. Requires zero mean in that phase
    /// (otherwise the primitive has a secular term outside this algebra).
    pub fn antiderivative(&self, phase: usize) -> TrigPoly {
        assert!(phase < self.nphases);
        let mut out = TrigPoly::zero(self.nphases, self.nvars);
        for (m, c) in &self.modes {
            let mu = m[phase];
            assert!(mu != 0, "antiderivative needs a zero-mean series in phase {phase}");
            let omega = std::f64::consts::TAU * f64::from(mu);
            // c / (i omega) = (im - i re) / omega
            let re = c.im.scale(1.0 / omega);
            let im = c.re.scale(-1.0 / omega);
            out.insert(m.clone(), re.clone(), im.clone());
            let mut m0 = m.clone();
            m0[phase] = 0;
            out.insert(m0, re.scale(-1.0), im.scale(-1.0));
        }
        out
    }

    /// Derivative with respect to state variable j.
    pub fn diff_var(&self, j: usize) -> TrigPoly {
        let mut out = TrigPoly::zero(self.nphases, self.nvars);
        for (m, c) in &self.modes {
            out.insert(m.clone(), c.re.diff(j), c.im.diff(j));
        }
        out
    }

    pub fn num_phases(&self) -> usize {
        self.nphases
    }

    pub fn num_vars(&self) -> usize {
        self.nvars
    }

    pub fn num_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn eval(&self, tau: &[f64], x: &DVector<f64>) -> f64 {
        debug_assert_eq!(tau.len(), self.nphases);
        let mut acc = 0.0;
        for (m, c) in &self.modes {
            let angle = std::f64::consts::TAU
                * m.iter().zip(tau).map(|(&mi, &ti)| f64::from(mi) * ti).sum::<f64>();
            acc += c.re.eval(x) * angle.cos() - c.im.eval(x) * angle.sin();
        }
        acc
    }
}
