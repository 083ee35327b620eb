//! Constrained multibody dynamics in multiplier form.
//!
//! A [`MultibodySystem`] supplies the mass matrix `M(q)` and the generalized
//! force vector `Q(q, q̇, u)`. [`forward_dynamics`] couples them with the
//! constraint Jacobian and solves the index-1 augmented system
//!
//! ```text
//! [ M    Φ_qᵀ ] [ q̈ ]   [ Q                 ]
//! [ Φ_q  0    ] [ λ  ] = [ −∂(Φ_q q̇)/∂q · q̇ ]
//! ```
//!
//! which yields the state-space vector field `ẋ = g(x, u)`.

mod builtin;
mod linkage;
mod pendulum;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::{ConstraintSystem, State};
use crate::world::Segment;

pub use builtin::{builtin_problem, circle_pendulum, five_bar, four_bar};
pub use linkage::{
    Joint, JointKind, Link, LinkPoint, Linkage, LoopClosure, Spring,
};
pub use pendulum::CirclePendulum;

/// Torques (or forces) applied at the actuated joints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Action(pub DVector<f64>);

impl Action {
    pub fn zeros(n_u: usize) -> Self {
        Action(DVector::zeros(n_u))
    }

    pub fn from_slice(u: &[f64]) -> Self {
        Action(DVector::from_column_slice(u))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }
}

/// Mechanism model on top of its constraint system.
pub trait MultibodySystem: ConstraintSystem {
    /// Number of actuated coordinates.
    fn n_u(&self) -> usize;

    /// Torque bound per actuator.
    fn tau_max(&self) -> Vec<f64>;

    fn mass_matrix(&self, q: &DVector<f64>) -> DMatrix<f64>;

    /// Gravity, springs, Coriolis/centrifugal terms and actuator torques,
    /// all on the right-hand side of `M q̈ + Φ_qᵀ λ = Q`.
    fn bias_and_applied_forces(&self, q: &DVector<f64>, qdot: &DVector<f64>, u: &Action) -> DVector<f64>;

    /// Kinetic plus potential energy.
    fn total_energy(&self, x: &State) -> f64;

    /// Link segments in the plane, used for collision and workspace checks.
    fn segments(&self, _q: &DVector<f64>) -> Vec<Segment> {
        Vec::new()
    }
}

/// Discretized bang-bang action set: the zero action, then `−τ_max` and
/// `+τ_max` on each actuator in turn.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionSet {
    pub actions: Vec<Action>,
}

impl ActionSet {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Action> {
        self.actions.iter()
    }
}

pub fn action_set<M: MultibodySystem + ?Sized>(mech: &M) -> ActionSet {
    let n_u = mech.n_u();
    let tau = mech.tau_max();
    let mut actions = vec![Action::zeros(n_u)];
    for (i, &t) in tau.iter().enumerate() {
        for sign in [-1.0, 1.0] {
            let mut u = DVector::zeros(n_u);
            u[i] = sign * t;
            actions.push(Action(u));
        }
    }
    ActionSet { actions }
}

/// Acceleration and multipliers from the augmented system.
pub fn constrained_acceleration<M: MultibodySystem + ?Sized>(
    mech: &M,
    x: &State,
    u: &Action,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let (n_q, n_e) = (mech.n_q(), mech.n_e());
    if x.0.len() != 2 * n_q {
        return Err(Error::Dimension {
            expected: 2 * n_q,
            got: x.0.len(),
        });
    }
    if u.len() != mech.n_u() {
        return Err(Error::Dimension {
            expected: mech.n_u(),
            got: u.len(),
        });
    }
    let q = x.q().into_owned();
    let qdot = x.qdot().into_owned();
    let mass = mech.mass_matrix(&q);
    let force = mech.bias_and_applied_forces(&q, &qdot, u);
    if n_e == 0 {
        let qddot = mass
            .cholesky()
            .ok_or_else(|| Error::Singularity("mass matrix is not positive definite".into()))?
            .solve(&force);
        return Ok((qddot, DVector::zeros(0)));
    }
    let jac = mech.phi_jac(&q);
    let gamma = -(mech.phi_hess_action(&q, &qdot) * &qdot);

    let dim = n_q + n_e;
    let mut aug = DMatrix::zeros(dim, dim);
    aug.view_mut((0, 0), (n_q, n_q)).copy_from(&mass);
    aug.view_mut((0, n_q), (n_q, n_e)).copy_from(&jac.transpose());
    aug.view_mut((n_q, 0), (n_e, n_q)).copy_from(&jac);
    let mut rhs = DVector::zeros(dim);
    rhs.rows_mut(0, n_q).copy_from(&force);
    rhs.rows_mut(n_q, n_e).copy_from(&gamma);

    let sol = aug
        .lu()
        .solve(&rhs)
        .filter(|s| s.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::Singularity("augmented dynamics matrix is singular".into()))?;
    Ok((sol.rows(0, n_q).into_owned(), sol.rows(n_q, n_e).into_owned()))
}

/// State-space vector field `g(x, u) = (q̇, q̈)`.
pub fn forward_dynamics<M: MultibodySystem + ?Sized>(mech: &M, x: &State, u: &Action) -> Result<DVector<f64>> {
    let (qddot, _) = constrained_acceleration(mech, x, u)?;
    let n_q = mech.n_q();
    let mut xdot = DVector::zeros(2 * n_q);
    xdot.rows_mut(0, n_q).copy_from(&x.qdot());
    xdot.rows_mut(n_q, n_q).copy_from(&qddot);
    Ok(xdot)
}

/// Mechanism description as it appears in problem files.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Linkage(Linkage),
    CirclePendulum(CirclePendulum),
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            ModelSpec::Linkage(l) => l.validate(),
            ModelSpec::CirclePendulum(p) => p.validate(),
        }
    }

    pub fn as_system(&self) -> &dyn MultibodySystem {
        match self {
            ModelSpec::Linkage(l) => l,
            ModelSpec::CirclePendulum(p) => p,
        }
    }

    /// Overrides every actuator bound with `tau`.
    pub fn set_tau_max(&mut self, tau: f64) {
        match self {
            ModelSpec::Linkage(l) => l.tau_max.iter_mut().for_each(|t| *t = tau),
            ModelSpec::CirclePendulum(p) => p.tau_max = tau,
        }
    }
}
