//! Drift-free time stepping in chart coordinates.
//!
//! One step advances the chart parameters with the trapezoidal rule and
//! recovers the ambient state by enforcing the constraints at the same time:
//!
//! ```text
//! F(x_{k+1}) = 0
//! U_cᵀ (x_{k+1} − h/2 (g(x_k) + g(x_{k+1})) − x_c) − y_k = 0
//! ```
//!
//! The square system is solved with good-Broyden updates of the inverse,
//! starting from the constant Jacobian `[F_x(x_k); U_cᵀ]`. Negative `h`
//! integrates backward in time.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::atlas::Chart;
use crate::dynamics::{forward_dynamics, Action, MultibodySystem};
use crate::error::{Error, Result};
use crate::manifold::{self, State, ETA_F};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorConfig {
    /// Bound on the chart-coordinate change of one step.
    pub delta: f64,
    /// s
    pub h_init: f64,
    /// s
    pub h_min: f64,
    /// s
    pub h_max: f64,
    /// Accepted-state consistency tolerance.
    pub eta_f: f64,
    /// Residual target of the implicit solve, at most `eta_f`.
    pub solve_tol: f64,
    pub broyden_max_iters: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            delta: 0.05,
            h_init: 1e-3,
            h_min: 1e-6,
            h_max: 0.05,
            eta_f: ETA_F,
            solve_tol: 1e-11,
            broyden_max_iters: 30,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0) {
            return Err(Error::invalid("integrator.delta must be positive"));
        }
        if !(self.h_min > 0.0 && self.h_min <= self.h_init && self.h_init <= self.h_max) {
            return Err(Error::invalid("integrator: need 0 < h_min <= h_init <= h_max"));
        }
        if !(self.eta_f > 0.0 && self.solve_tol > 0.0 && self.solve_tol <= self.eta_f) {
            return Err(Error::invalid("integrator: need 0 < solve_tol <= eta_f"));
        }
        if self.broyden_max_iters == 0 {
            return Err(Error::invalid("integrator.broyden_max_iters must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct StepResult {
    pub x_next: State,
    pub y_next: DVector<f64>,
    /// s, signed
    pub h_used: f64,
    /// Proposed size of the following step, same sign as `h_used`.
    pub h_next: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug)]
pub struct BroydenOutcome {
    pub x: DVector<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// Good-Broyden iteration on the inverse Jacobian.
///
/// Converges when `‖r‖_∞ ≤ tol`. If the cap is hit with the residual already
/// below `accept`, the iterate is returned anyway.
pub fn broyden_solve<R>(
    mut residual: R,
    x0: DVector<f64>,
    jacobian: &DMatrix<f64>,
    tol: f64,
    accept: f64,
    max_iters: usize,
) -> Result<BroydenOutcome>
where
    R: FnMut(&DVector<f64>) -> Result<DVector<f64>>,
{
    let mut inv = jacobian
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Singularity("step Jacobian is singular".into()))?;
    let mut x = x0;
    let mut r = residual(&x)?;
    let mut norm = r.amax();
    for it in 0..=max_iters {
        if !norm.is_finite() {
            break;
        }
        if norm <= tol {
            return Ok(BroydenOutcome {
                x,
                iterations: it,
                residual: norm,
            });
        }
        if it == max_iters {
            break;
        }
        let dx = -(&inv * &r);
        x += &dx;
        let r_new = residual(&x)?;
        let dr = &r_new - &r;
        let inv_dr = &inv * &dr;
        let denom = dx.dot(&inv_dr);
        if denom.abs() > f64::MIN_POSITIVE {
            let row = dx.transpose() * &inv;
            inv += (&dx - &inv_dr) * row / denom;
        }
        r = r_new;
        norm = r.amax();
    }
    if norm <= accept {
        return Ok(BroydenOutcome {
            x,
            iterations: max_iters,
            residual: norm,
        });
    }
    Err(Error::StepDiverged {
        iterations: max_iters,
        residual: norm,
    })
}

/// One implicit trapezoidal step of fixed size `h` in `chart`.
pub fn step<M: MultibodySystem + ?Sized>(
    mech: &M,
    chart: &Chart,
    x_k: &State,
    y_k: &DVector<f64>,
    u: &Action,
    h: f64,
    cfg: &IntegratorConfig,
) -> Result<(State, DVector<f64>, usize)> {
    let g_k = forward_dynamics(mech, x_k, u)?;
    let basis = chart.basis.matrix();
    let n = x_k.0.len();
    let n_f = 2 * mech.n_e();
    let d = basis.ncols();

    let residual = |x: &DVector<f64>| -> Result<DVector<f64>> {
        let xs = State(x.clone());
        let g = forward_dynamics(mech, &xs, u)?;
        let f = manifold::eval_f(mech, &xs)?;
        let mid = x - (&g_k + g) * (0.5 * h) - &chart.center.0;
        let mut r = DVector::zeros(n);
        r.rows_mut(0, n_f).copy_from(&f);
        r.rows_mut(n_f, d).copy_from(&(basis.tr_mul(&mid) - y_k));
        Ok(r)
    };

    let mut jac = DMatrix::zeros(n, n);
    jac.view_mut((0, 0), (n_f, n)).copy_from(&manifold::eval_f_jacobian(mech, x_k)?);
    jac.view_mut((n_f, 0), (d, n)).copy_from(&basis.transpose());

    let predictor = &x_k.0 + &g_k * h;
    let out = broyden_solve(residual, predictor, &jac, cfg.solve_tol, cfg.eta_f, cfg.broyden_max_iters)?;
    let x_next = State(out.x);
    let y_next = chart.coords(&x_next);
    Ok((x_next, y_next, out.iterations))
}

/// Next step size from the chart-coordinate change of the accepted one.
pub fn adapt_step(h: f64, dy: f64, cfg: &IntegratorConfig) -> f64 {
    let mag = if dy > 0.0 {
        (h.abs() * cfg.delta / dy).clamp(cfg.h_min, cfg.h_max)
    } else {
        cfg.h_max
    };
    mag.copysign(h)
}

/// Adaptive step: halves `h` until the implicit solve converges and the
/// chart-coordinate change stays within `δ`.
pub fn next_state<M: MultibodySystem + ?Sized>(
    mech: &M,
    chart: &Chart,
    x_k: &State,
    y_k: &DVector<f64>,
    u: &Action,
    h: f64,
    cfg: &IntegratorConfig,
) -> Result<StepResult> {
    let mut h = h;
    loop {
        if h.abs() < cfg.h_min {
            return Err(Error::StepTooSmall {
                h: h.abs(),
                h_min: cfg.h_min,
            });
        }
        match step(mech, chart, x_k, y_k, u, h, cfg) {
            Ok((x_next, y_next, iterations)) => {
                let dy = (&y_next - y_k).norm();
                if dy <= cfg.delta {
                    return Ok(StepResult {
                        x_next,
                        y_next,
                        h_used: h,
                        h_next: adapt_step(h, dy, cfg),
                        iterations,
                    });
                }
            }
            Err(Error::StepDiverged { .. }) => {}
            Err(e) => return Err(e),
        }
        h *= 0.5;
    }
}

/// Classical RK4 step of the index-1 ODE form, with no constraint
/// enforcement. Used only to show drift.
pub fn rk4_ode_step<M: MultibodySystem + ?Sized>(mech: &M, x: &State, u: &Action, h: f64) -> Result<State> {
    let f = |v: &DVector<f64>| forward_dynamics(mech, &State(v.clone()), u);
    let x0 = &x.0;
    let k1 = f(x0)?;
    let k2 = f(&(x0 + &k1 * (0.5 * h)))?;
    let k3 = f(&(x0 + &k2 * (0.5 * h)))?;
    let k4 = f(&(x0 + &k3 * h))?;
    Ok(State(x0 + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)))
}
