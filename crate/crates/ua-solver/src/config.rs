use serde::{Deserialize, Serialize};

use crate::error::{Result, UaError};

/// Parameters shared by the map fixed-point loops and the slow integrator.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Coarse time step of the slow equation.
    pub dt: f64,
    /// Integration horizon.
    pub t_final: f64,
    /// Convergence threshold of the map fixed-point sweeps.
    pub fp_tol: f64,
    /// Iteration cap of the map fixed-point sweeps.
    pub fp_max_iter: usize,
    /// Node count for quadrature: periodic means, antiderivatives and the
    /// in-step time integral all share it.
    pub quad_nodes: usize,
    /// Central-difference step for numeric Jacobians of the antiderivatives.
    pub fd_dx: f64,
    /// Convergence threshold of the per-step nonlinear solve.
    pub midpoint_tol: f64,
    /// Iteration cap of the per-step nonlinear solve.
    pub midpoint_max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            dt: 0.1,
            t_final: 1.0,
            fp_tol: 1e-14,
            fp_max_iter: 100,
            quad_nodes: 8,
            fd_dx: 1e-3,
            midpoint_tol: 1e-12,
            midpoint_max_iter: 100,
        }
    }
}

impl SolverConfig {
    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn with_horizon(mut self, t_final: f64) -> Self {
        self.t_final = t_final;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dt", self.dt),
            ("t_final", self.t_final),
            ("fp_tol", self.fp_tol),
            ("fd_dx", self.fd_dx),
            ("midpoint_tol", self.midpoint_tol),
        ];
        for (name, v) in positive {
            if !v.is_finite() || v <= 0.0 {
                return Err(UaError::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if self.t_final < self.dt {
            return Err(UaError::InvalidConfig(format!(
                "t_final ({}) must be at least one step dt ({})",
                self.t_final, self.dt
            )));
        }
        if self.fp_max_iter == 0 || self.midpoint_max_iter == 0 || self.quad_nodes == 0 {
            return Err(UaError::InvalidConfig("iteration caps and quad_nodes must be >= 1".into()));
        }
        Ok(())
    }
}
