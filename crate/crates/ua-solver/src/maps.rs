//! Composition maps and the transformed slow right-hand side.
//!
//! Each level carries a near-identity map in implicit midpoint form,
//!
//!   Phi^k(x) = x + eps_k g^k(t_1..t_k, (x + Phi^k(x)) / 2),
//!
//! solved by fixed-point iteration, together with fixed-point forms of its
//! phase derivative and inverse-Jacobian action:
//!
//!   T_k = f^k(mid) + (eps_k/2) Dg^k(mid) T_k,          T_k = (1/eps_k) d/dt_k Phi^k,
//!   V   = K - (eps_k/2) Dg^k(mid) (K + V),             V = (DPhi^k)^{-1} K.
//!
//! The lift runs a simultaneous (Jacobi) sweep over all levels per outer
//! iteration: P_0 = y, R_k = (P_{k-1} + P_k)/2, P_k <- P_{k-1} + eps_k g^k(R_k),
//! until P_n settles. The slow right-hand side then peels the levels back off:
//! D_{n+1} = f(P_n), and for k = n..1, B_k = D_{k+1} - T_k followed by the
//! inverse-Jacobian update for D_k, until D_1 settles. D_1 is dy/dt.
//!
//! T_k is iterated directly in its (1/eps_k)-scaled form; dividing the raw
//! phase derivative by a tiny eps_k would amplify cancellation.

use nalgebra::{DMatrix, DVector};

use crate::config::SolverConfig;
use crate::decomp::FieldDecomposition;
use crate::error::{Result, UaError};
use crate::scale::ScaleVector;

/// Converged per-level stacks of one map evaluation.
///
/// Index convention: `p[k]` is P_k for k = 0..=n (so `p[0]` is y and `p[n]`
/// the lifted state); `r`, `t`, `b` hold levels 1..=n at index k-1; `d[k-1]`
/// is D_k for k = 1..=n+1.
#[derive(Debug, Clone)]
pub struct MapStack {
    pub p: Vec<DVector<f64>>,
    pub r: Vec<DVector<f64>>,
    pub t: Vec<DVector<f64>>,
    pub b: Vec<DVector<f64>>,
    pub d: Vec<DVector<f64>>,
    pub iters_p: usize,
    pub iters_d: usize,
    pub residual_p: f64,
    pub residual_d: f64,
}

impl MapStack {
    fn new_p_only(p: Vec<DVector<f64>>, r: Vec<DVector<f64>>, iters: usize, residual: f64) -> Self {
        Self {
            p,
            r,
            t: Vec::new(),
            b: Vec::new(),
            d: Vec::new(),
            iters_p: iters,
            iters_d: 0,
            residual_p: residual,
            residual_d: 0.0,
        }
    }
}

/// Phi^k(x) in implicit midpoint form. Returns x bit-exactly when t_k = 0.
pub fn phi_apply(
    decomp: &FieldDecomposition,
    eps: &ScaleVector,
    k: usize,
    tau: &[f64],
    x: &DVector<f64>,
    cfg: &SolverConfig,
) -> Result<DVector<f64>> {
    if tau[k - 1] == 0.0 {
        return Ok(x.clone());
    }
    let eps_k = eps.level(k);
    let mut z = x.clone();
    let mut residuals = Vec::new();
    for _ in 0..cfg.fp_max_iter {
        let mid = (x + &z) * 0.5;
        let z_next = x + decomp.anti(k, tau, &mid)? * eps_k;
        let resid = (&z_next - &z).amax();
        z = z_next;
        residuals.push(resid);
        if resid <= cfg.fp_tol {
            return Ok(z);
        }
    }
    Err(UaError::NonConvergence {
        context: format!("map level {k} (eps_{k} = {eps_k:e} may be too large for contraction)"),
        iters: residuals.len(),
        residuals,
    })
}

/// T_k = (1/eps_k) d/dt_k Phi^k at x, given the converged phi_x.
pub fn phi_dt_scaled(
    decomp: &FieldDecomposition,
    eps: &ScaleVector,
    k: usize,
    tau: &[f64],
    x: &DVector<f64>,
    phi_x: &DVector<f64>,
    cfg: &SolverConfig,
) -> Result<DVector<f64>> {
    let eps_k = eps.level(k);
    let mid = (x + phi_x) * 0.5;
    let fk = decomp.fluct(k, tau, &mid)?;
    let jac = decomp.anti_jac(k, tau, &mid)?;
    let mut t = DVector::zeros(x.len());
    let mut residuals = Vec::new();
    for _ in 0..cfg.fp_max_iter {
        let t_next = &fk + (&jac * &t) * (eps_k * 0.5);
        let resid = (&t_next - &t).amax();
        t = t_next;
        residuals.push(resid);
        if resid <= cfg.fp_tol {
            return Ok(t);
        }
    }
    Err(UaError::NonConvergence {
        context: format!("phase derivative at level {k}"),
        iters: residuals.len(),
        residuals,
    })
}

/// V = (DPhi^k)^{-1} K without materializing the inverse. Convergence needs
/// the Neumann condition ||eps_k Dg^k|| < 1.
pub fn phi_jac_inv_apply(
    decomp: &FieldDecomposition,
    eps: &ScaleVector,
    k: usize,
    tau: &[f64],
    x: &DVector<f64>,
    phi_x: &DVector<f64>,
    kv: &DVector<f64>,
    cfg: &SolverConfig,
) -> Result<DVector<f64>> {
    let eps_k = eps.level(k);
    let mid = (x + phi_x) * 0.5;
    let jac = decomp.anti_jac(k, tau, &mid)?;
    let mut v = DVector::zeros(kv.len());
    let mut residuals = Vec::new();
    for _ in 0..cfg.fp_max_iter {
        let v_next = kv - (&jac * (kv + &v)) * (eps_k * 0.5);
        let resid = (&v_next - &v).amax();
        v = v_next;
        residuals.push(resid);
        if resid <= cfg.fp_tol {
            return Ok(v);
        }
    }
    Err(UaError::NonConvergence {
        context: format!(
            "inverse-Jacobian action at level {k} (invertibility condition violated, eps_{k} = {eps_k:e})"
        ),
        iters: residuals.len(),
        residuals,
    })
}

/// Cumulative composition x = Phi^n o ... o Phi^1 (y) at time t.
pub fn lift(
    decomp: &FieldDecomposition,
    eps: &ScaleVector,
    t: f64,
    y: &DVector<f64>,
    cfg: &SolverConfig,
) -> Result<(DVector<f64>, MapStack)> {
    lift_at_phases(decomp, eps, &eps.phases(t), y, None, cfg)
}

/// Lift with explicit phases; `seed` warm-starts the P sweep with the stack
/// of a nearby evaluation.
pub fn lift_at_phases(
    decomp: &FieldDecomposition,
    eps: &ScaleVector,
    tau: &[f64],
    y: &DVector<f64>,
    seed: Option<&MapStack>,
    cfg: &SolverConfig,
) -> Result<(DVector<f64>, MapStack)> {
    let n = decomp.levels();
    let mut p: Vec<DVector<f64>> = match seed {
        Some(s) if s.p.len() == n + 1 && s.p[0].len() == y.len() => s.p.clone(),
        _ => vec![y.clone(); n + 1],
    };
    p[0] = y.clone();

    let mut residuals = Vec::new();
    let mut converged = false;
    let mut iters = 0;
    while iters < cfg.fp_max_iter {
        iters += 1;
        let mut p_next = Vec::with_capacity(n + 1);
        p_next.push(y.clone());
        for k in 1..=n {
            let r_k = (&p[k - 1] + &p[k]) * 0.5;
            p_next.push(&p[k - 1] + decomp.anti(k, tau, &r_k)? * eps.level(k));
        }
        let resid = (&p_next[n] - &p[n]).amax();
        p = p_next;
        residuals.push(resid);
        if !resid.is_finite() {
            return Err(UaError::Evaluation {
                phases: tau.to_vec(),
                x: y.iter().copied().collect(),
            });
        }
        if resid <= cfg.fp_tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(UaError::NonConvergence {
            context: "cumulative map sweep".into(),
            iters,
            residuals,
        });
    }

    let r: Vec<DVector<f64>> = (1..=n).map(|k| (&p[k - 1] + &p[k]) * 0.5).collect();
    let x = p[n].clone();
    let resid = *residuals.last().unwrap();
    Ok((x, MapStack::new_p_only(p, r, iters, resid)))
}

/// Right-hand side F(t, y) of the transformed slow equation, plus the stack.
pub fn slow_rhs(
    decomp: &FieldDecomposition,
    eps: &ScaleVector,
    t: f64,
    y: &DVector<f64>,
    cfg: &SolverConfig,
) -> Result<(DVector<f64>, MapStack)> {
    slow_rhs_at_phases(decomp, eps, &eps.phases(t), y, None, cfg)
}

/// F at explicit phases, with optional warm-start stack for the P sweep.
pub fn slow_rhs_at_phases(
    decomp: &FieldDecomposition,
    eps: &ScaleVector,
    tau: &[f64],
    y: &DVector<f64>,
    seed: Option<&MapStack>,
    cfg: &SolverConfig,
) -> Result<(DVector<f64>, MapStack)> {
    let n = decomp.levels();
    let d = decomp.dim();
    let (_, mut stack) = lift_at_phases(decomp, eps, tau, y, seed, cfg)?;

    // All level data is frozen at the converged midpoints, so the backward
    // sweep below is pure linear algebra.
    let f_top = decomp.field().eval_checked(tau, &stack.p[n])?;
    let mut fk = Vec::with_capacity(n);
    let mut jk = Vec::with_capacity(n);
    for k in 1..=n {
        fk.push(decomp.fluct(k, tau, &stack.r[k - 1])?);
        jk.push(decomp.anti_jac(k, tau, &stack.r[k - 1])?);
    }

    let mut t_cur: Vec<DVector<f64>> = vec![DVector::zeros(d); n];
    let mut d_cur: Vec<DVector<f64>> = vec![DVector::zeros(d); n + 1];
    d_cur[n] = f_top.clone();
    let mut b_cur: Vec<DVector<f64>> = vec![DVector::zeros(d); n];

    let mut residuals = Vec::new();
    let mut converged = false;
    let mut iters = 0;
    while iters < cfg.fp_max_iter {
        iters += 1;
        let mut t_next = t_cur.clone();
        let mut d_next = d_cur.clone();
        for k in (1..=n).rev() {
            let half_eps = eps.level(k) * 0.5;
            t_next[k - 1] = &fk[k - 1] + (&jk[k - 1] * &t_cur[k - 1]) * half_eps;
            let b = &d_cur[k] - &t_next[k - 1];
            d_next[k - 1] = &b - (&jk[k - 1] * (&b + &d_cur[k - 1])) * half_eps;
            b_cur[k - 1] = b;
        }
        let resid = (&d_next[0] - &d_cur[0]).amax();
        t_cur = t_next;
        d_cur = d_next;
        residuals.push(resid);
        if resid <= cfg.fp_tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(UaError::NonConvergence {
            context: "slow right-hand side sweep".into(),
            iters,
            residuals,
        });
    }

    stack.t = t_cur;
    stack.b = b_cur;
    stack.d = d_cur;
    stack.iters_d = iters;
    stack.residual_d = *residuals.last().unwrap();
    Ok((stack.d[0].clone(), stack))
}

/// Phase-grid diagnostics of the map machinery at a fixed state.
///
/// Over a uniform grid of the two finest phases (any coarser phases held at
/// zero) this records f - D_1, P_n - y, and the two finest scaled phase
/// derivatives. Row-major storage: entry `i * res + j` belongs to
/// (tau_a[i], tau_b[j]) where a, b are the two finest levels.
#[derive(Debug, Clone)]
pub struct DiagnosticsGrid {
    pub tau_coarse: Vec<f64>,
    pub tau_fine: Vec<f64>,
    pub f_minus_d1: Vec<DVector<f64>>,
    pub p_minus_y: Vec<DVector<f64>>,
    pub t_coarse: Vec<DVector<f64>>,
    pub t_fine: Vec<DVector<f64>>,
}

pub fn map_diagnostics(
    decomp: &FieldDecomposition,
    eps: &ScaleVector,
    y: &DVector<f64>,
    res: usize,
    cfg: &SolverConfig,
) -> Result<DiagnosticsGrid> {
    let n = decomp.levels();
    if n < 2 {
        return Err(UaError::InvalidConfig("diagnostics grid needs at least two phases".into()));
    }
    if res < 2 {
        return Err(UaError::InvalidConfig("grid resolution must be at least 2".into()));
    }
    let axis: Vec<f64> = (0..res).map(|i| i as f64 / res as f64).collect();
    let mut out = DiagnosticsGrid {
        tau_coarse: axis.clone(),
        tau_fine: axis.clone(),
        f_minus_d1: Vec::with_capacity(res * res),
        p_minus_y: Vec::with_capacity(res * res),
        t_coarse: Vec::with_capacity(res * res),
        t_fine: Vec::with_capacity(res * res),
    };
    for &ta in &axis {
        for &tb in &axis {
            let mut tau = vec![0.0; n];
            tau[n - 2] = ta;
            tau[n - 1] = tb;
            let (_, stack) = slow_rhs_at_phases(decomp, eps, &tau, y, None, cfg)?;
            let f = decomp.field().eval_checked(&tau, y)?;
            out.f_minus_d1.push(&f - &stack.d[0]);
            out.p_minus_y.push(&stack.p[n] - y);
            out.t_coarse.push(stack.t[n - 2].clone());
            out.t_fine.push(stack.t[n - 1].clone());
        }
    }
    Ok(out)
}
