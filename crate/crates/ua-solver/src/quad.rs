//! Quadrature rules used by the decomposition and the slow integrator.
//!
//! Means of 1-periodic integrands over [0, 1] use the uniform-node rectangle
//! rule, which is spectrally accurate for smooth periodic functions.
//! Integrals over partial intervals use fixed-order Gauss-Legendre.

use nalgebra::DVector;

use crate::error::Result;

/// Average of a 1-periodic function over one period with `nodes` uniform nodes.
pub fn periodic_mean<F>(nodes: usize, f: F) -> Result<DVector<f64>>
where
    F: Fn(f64) -> Result<DVector<f64>>,
{
    let mut acc = f(0.0)?;
    for j in 1..nodes {
        acc += f(j as f64 / nodes as f64)?;
    }
    Ok(acc / nodes as f64)
}

/// Gauss-Legendre nodes and weights on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Computes the degree-n rule by Newton iteration on the Legendre roots.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n {
            // Chebyshev-based initial guess for the i-th root.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-15 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            nodes[i] = x;
            weights[i] = 2.0 / ((1.0 - x * x) * d * d);
        }
        // Roots came out in descending order; flip for ascending nodes.
        nodes.reverse();
        weights.reverse();
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Integral of a scalar function over [a, b].
    pub fn integrate<F>(&self, a: f64, b: f64, f: F) -> f64
    where
        F: Fn(f64) -> f64,
    {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let sum: f64 = self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(mid + half * x))
            .sum();
        half * sum
    }

    /// Integral of a vector-valued function over [a, b].
    pub fn integrate_vec<F>(&self, a: f64, b: f64, f: F) -> Result<DVector<f64>>
    where
        F: Fn(f64) -> Result<DVector<f64>>,
    {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = f(mid + half * self.nodes[0])? * (half * self.weights[0]);
        for (&x, &w) in self.nodes.iter().zip(&self.weights).skip(1) {
            acc += f(mid + half * x)? * (half * w);
        }
        Ok(acc)
    }
}

/// P_n(x) and P_n'(x) by the three-term recurrence.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}
