//! Implicitly defined state-space manifolds.
//!
//! A [`ConstraintSystem`] provides the position constraints `Φ(q) = 0` of a
//! mechanism. Differentiating them in time gives the velocity constraints
//! `Φ_q(q) q̇ = 0`, and the stack of both, `F(x) = 0` with `x = (q, q̇)`, is
//! the state-space manifold every planner structure lives on.

use nalgebra::{DMatrix, DVector, DVectorView};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `‖F(x)‖∞` for a state to count as lying on the manifold.
pub const ETA_F: f64 = 1e-8;

/// Residual target of chart lifts and projections, so their results sit
/// well inside `ETA_F`.
const NEWTON_TOL: f64 = ETA_F * 1e-2;

/// Newton iteration cap for chart lifts and projections.
pub const NEWTON_MAX_ITERS: usize = 50;

/// Mechanical state `x = (q, q̇)` stored as one ambient vector of length `2 n_q`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct State(pub DVector<f64>);

impl State {
    pub fn new(q: &[f64], qdot: &[f64]) -> Self {
        assert_eq!(q.len(), qdot.len(), "q and qdot must have equal length");
        State(DVector::from_iterator(
            2 * q.len(),
            q.iter().chain(qdot.iter()).copied(),
        ))
    }

    pub fn from_vector(x: DVector<f64>) -> Self {
        debug_assert!(x.len().is_multiple_of(2));
        State(x)
    }

    pub fn n_q(&self) -> usize {
        self.0.len() / 2
    }

    pub fn q(&self) -> DVectorView<'_, f64> {
        self.0.rows(0, self.n_q())
    }

    pub fn qdot(&self) -> DVectorView<'_, f64> {
        self.0.rows(self.n_q(), self.n_q())
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn distance(&self, other: &State) -> f64 {
        (&self.0 - &other.0).norm()
    }
}

/// Holonomic constraints `Φ(q) = 0` and their derivatives.
///
/// Implementations must be immutable after construction; every method is a
/// pure function of its arguments.
pub trait ConstraintSystem: Send + Sync {
    fn n_q(&self) -> usize;

    fn n_e(&self) -> usize;

    fn phi(&self, q: &DVector<f64>) -> DVector<f64>;

    /// `Φ_q(q)`, an `n_e × n_q` matrix.
    fn phi_jac(&self, q: &DVector<f64>) -> DMatrix<f64>;

    /// `∂/∂q [Φ_q(q) v]`, an `n_e × n_q` matrix.
    ///
    /// The default is a central difference of `phi_jac`, accurate to roughly
    /// `1e-7` relative. Mechanisms with closed-form second derivatives
    /// should override it.
    fn phi_hess_action(&self, q: &DVector<f64>, v: &DVector<f64>) -> DMatrix<f64> {
        fd_hess_action(self, q, v)
    }

    fn d_c(&self) -> usize {
        self.n_q() - self.n_e()
    }

    fn d_x(&self) -> usize {
        2 * self.d_c()
    }
}

/// Central-difference approximation of `∂/∂q [Φ_q(q) v]`.
pub fn fd_hess_action<C: ConstraintSystem + ?Sized>(
    cs: &C,
    q: &DVector<f64>,
    v: &DVector<f64>,
) -> DMatrix<f64> {
    let n = cs.n_q();
    let mut out = DMatrix::zeros(cs.n_e(), n);
    for k in 0..n {
        let step = 1e-6 * q[k].abs().max(1.0);
        let mut qp = q.clone();
        let mut qm = q.clone();
        qp[k] += step;
        qm[k] -= step;
        let col = (cs.phi_jac(&qp) * v - cs.phi_jac(&qm) * v) / (2.0 * step);
        out.set_column(k, &col);
    }
    out
}

fn check_state<C: ConstraintSystem + ?Sized>(cs: &C, x: &State) -> Result<()> {
    if x.0.len() != 2 * cs.n_q() {
        return Err(Error::Dimension {
            expected: 2 * cs.n_q(),
            got: x.0.len(),
        });
    }
    Ok(())
}

/// `F(x) = [Φ(q); Φ_q(q) q̇]`.
pub fn eval_f<C: ConstraintSystem + ?Sized>(cs: &C, x: &State) -> Result<DVector<f64>> {
    check_state(cs, x)?;
    let q = x.q().into_owned();
    let qdot = x.qdot().into_owned();
    let n_e = cs.n_e();
    let mut out = DVector::zeros(2 * n_e);
    out.rows_mut(0, n_e).copy_from(&cs.phi(&q));
    out.rows_mut(n_e, n_e).copy_from(&(cs.phi_jac(&q) * qdot));
    Ok(out)
}

/// `F_x = [[Φ_q, 0], [∂(Φ_q q̇)/∂q, Φ_q]]`.
pub fn eval_f_jacobian<C: ConstraintSystem + ?Sized>(cs: &C, x: &State) -> Result<DMatrix<f64>> {
    check_state(cs, x)?;
    let (n_q, n_e) = (cs.n_q(), cs.n_e());
    let q = x.q().into_owned();
    let qdot = x.qdot().into_owned();
    let jac = cs.phi_jac(&q);
    let mut out = DMatrix::zeros(2 * n_e, 2 * n_q);
    out.view_mut((0, 0), (n_e, n_q)).copy_from(&jac);
    out.view_mut((n_e, n_q), (n_e, n_q)).copy_from(&jac);
    out.view_mut((n_e, 0), (n_e, n_q))
        .copy_from(&cs.phi_hess_action(&q, &qdot));
    Ok(out)
}

pub fn residual_norm<C: ConstraintSystem + ?Sized>(cs: &C, x: &State) -> Result<f64> {
    Ok(eval_f(cs, x)?.amax())
}

pub fn is_consistent<C: ConstraintSystem + ?Sized>(cs: &C, x: &State, tol: f64) -> bool {
    residual_norm(cs, x).is_ok_and(|r| r <= tol)
}

/// Orthonormal basis of the tangent space `ker F_x`, one column per
/// manifold dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TangentBasis(pub DMatrix<f64>);

impl TangentBasis {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.ncols()
    }
}

/// Tangent basis at `x` from the full QR decomposition of `F_xᵀ`: the last
/// `d_X` columns of `Q` span the kernel of `F_x`.
pub fn tangent_basis<C: ConstraintSystem + ?Sized>(cs: &C, x: &State) -> Result<TangentBasis> {
    let fx = eval_f_jacobian(cs, x)?;
    kernel_basis(&fx).map(TangentBasis)
}

/// Orthonormal kernel basis of a full-row-rank matrix `a` (`m × n`, `m ≤ n`).
pub fn kernel_basis(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (m, n) = a.shape();
    if m == 0 {
        return Ok(DMatrix::identity(n, n));
    }
    if m > n {
        return Err(Error::Singularity(format!(
            "{m} constraints on {n} coordinates"
        )));
    }
    let qr = a.transpose().qr();
    let r = qr.r();
    let scale = r.diagonal().amax().max(1.0);
    for i in 0..m {
        if r[(i, i)].abs() <= 1e-10 * scale {
            return Err(Error::Singularity(format!(
                "constraint Jacobian is rank deficient (pivot {i} = {:e})",
                r[(i, i)]
            )));
        }
    }
    // Qᵀ·I through the stored Householder reflectors gives the full square Q.
    let mut q_t = DMatrix::identity(n, n);
    qr.q_tr_mul(&mut q_t);
    Ok(q_t.transpose().columns(m, n - m).into_owned())
}

/// Chart coordinates `y = Uᵀ (x − x_c)`.
pub fn chart_coords(center: &State, basis: &TangentBasis, x: &State) -> DVector<f64> {
    basis.0.tr_mul(&(&x.0 - &center.0))
}

/// Inverse chart map: solves `F(x) = 0`, `Uᵀ(x − x_c) = y` by Newton-Raphson
/// from `x_c + U y`.
pub fn chart_lift<C: ConstraintSystem + ?Sized>(
    cs: &C,
    center: &State,
    basis: &TangentBasis,
    y: &DVector<f64>,
) -> Result<State> {
    let u = &basis.0;
    let n_f = 2 * cs.n_e();
    let dim = center.0.len();
    let mut x = State(&center.0 + u * y);
    let mut residual = DVector::zeros(dim);
    for iter in 0..=NEWTON_MAX_ITERS {
        residual
            .rows_mut(0, n_f)
            .copy_from(&eval_f(cs, &x)?);
        residual
            .rows_mut(n_f, dim - n_f)
            .copy_from(&(chart_coords(center, basis, &x) - y));
        let norm = residual.amax();
        if norm <= NEWTON_TOL {
            return Ok(x);
        }
        if iter == NEWTON_MAX_ITERS || !norm.is_finite() {
            return Err(Error::LiftDiverged {
                iterations: iter,
                residual: norm,
            });
        }
        let mut jac = DMatrix::zeros(dim, dim);
        jac.rows_mut(0, n_f).copy_from(&eval_f_jacobian(cs, &x)?);
        jac.rows_mut(n_f, dim - n_f).copy_from(&u.transpose());
        let dx = jac.lu().solve(&residual).ok_or(Error::LiftDiverged {
            iterations: iter,
            residual: norm,
        })?;
        x.0 -= dx;
    }
    unreachable!()
}

/// Moves an arbitrary ambient point onto the manifold: Gauss-Newton with
/// minimum-norm corrections on `Φ`, then the orthogonal projection of the
/// velocity onto `ker Φ_q`.
pub fn project_to_manifold<C: ConstraintSystem + ?Sized>(cs: &C, x: &State) -> Result<State> {
    check_state(cs, x)?;
    let mut q = x.q().into_owned();
    let n_e = cs.n_e();
    let mut converged = n_e == 0;
    for _ in 0..NEWTON_MAX_ITERS {
        if n_e == 0 {
            break;
        }
        let phi = cs.phi(&q);
        if phi.amax() <= NEWTON_TOL {
            converged = true;
            break;
        }
        let jac = cs.phi_jac(&q);
        let jjt = &jac * jac.transpose();
        let w = jjt
            .lu()
            .solve(&phi)
            .ok_or_else(|| Error::Singularity("Φ_q lost rank during projection".into()))?;
        q -= jac.transpose() * w;
    }
    if !converged {
        return Err(Error::LiftDiverged {
            iterations: NEWTON_MAX_ITERS,
            residual: cs.phi(&q).amax(),
        });
    }
    let mut qdot = x.qdot().into_owned();
    if n_e > 0 {
        let jac = cs.phi_jac(&q);
        let jjt = &jac * jac.transpose();
        let w = jjt
            .lu()
            .solve(&(&jac * &qdot))
            .ok_or_else(|| Error::Singularity("Φ_q lost rank during projection".into()))?;
        qdot -= jac.transpose() * w;
    }
    Ok(State::new(q.as_slice(), qdot.as_slice()))
}

/// Unit sphere `‖q‖² = 1` in `R^n`.
#[derive(Clone, Debug)]
pub struct Sphere {
    pub dim: usize,
}

impl ConstraintSystem for Sphere {
    fn n_q(&self) -> usize {
        self.dim
    }

    fn n_e(&self) -> usize {
        1
    }

    fn phi(&self, q: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, q.norm_squared() - 1.0)
    }

    fn phi_jac(&self, q: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_row_slice(1, q.len(), (2.0 * q).as_slice())
    }

    fn phi_hess_action(&self, _q: &DVector<f64>, v: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_row_slice(1, v.len(), (2.0 * v).as_slice())
    }
}

/// Affine constraints `A q = b`: a flat manifold.
#[derive(Clone, Debug)]
pub struct AffineConstraint {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl ConstraintSystem for AffineConstraint {
    fn n_q(&self) -> usize {
        self.a.ncols()
    }

    fn n_e(&self) -> usize {
        self.a.nrows()
    }

    fn phi(&self, q: &DVector<f64>) -> DVector<f64> {
        &self.a * q - &self.b
    }

    fn phi_jac(&self, _q: &DVector<f64>) -> DMatrix<f64> {
        self.a.clone()
    }

    fn phi_hess_action(&self, _q: &DVector<f64>, _v: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(self.a.nrows(), self.a.ncols())
    }
}
