use nalgebra::{DMatrix, DVector, Vector2};
use serde::{Deserialize, Serialize};

use super::{Action, MultibodySystem};
use crate::error::{Error, Result};
use crate::manifold::{ConstraintSystem, State};
use crate::world::Segment;

/// Point mass on a massless rod, in Cartesian coordinates `q = (x, y)` with
/// the pivot at the origin and `Φ(q) = x² + y² − L²`.
///
/// The single actuator applies a torque about the pivot. Gravity acts along
/// `−y`; the potential energy datum is the pivot height.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CirclePendulum {
    /// kg
    pub mass: f64,
    /// m
    pub length: f64,
    /// m/s², magnitude
    pub gravity: f64,
    /// N·m
    pub tau_max: f64,
}

impl CirclePendulum {
    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0) {
            return Err(Error::invalid("mechanism.mass must be positive"));
        }
        if !(self.length > 0.0) {
            return Err(Error::invalid("mechanism.length must be positive"));
        }
        if !(self.tau_max >= 0.0) {
            return Err(Error::invalid("mechanism.tau_max must be non-negative"));
        }
        Ok(())
    }

    /// Angular velocity about the pivot.
    pub fn angular_velocity(&self, x: &State) -> f64 {
        let (q, v) = (x.q(), x.qdot());
        (q[0] * v[1] - q[1] * v[0]) / (self.length * self.length)
    }

    /// State at angle `theta` from the downward vertical with angular rate `omega`.
    pub fn state_at(&self, theta: f64, omega: f64) -> State {
        let l = self.length;
        State::new(
            &[l * theta.sin(), -l * theta.cos()],
            &[l * omega * theta.cos(), l * omega * theta.sin()],
        )
    }
}

impl ConstraintSystem for CirclePendulum {
    fn n_q(&self) -> usize {
        2
    }

    fn n_e(&self) -> usize {
        1
    }

    fn phi(&self, q: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, q.norm_squared() - self.length * self.length)
    }

    fn phi_jac(&self, q: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_row_slice(1, q.len(), (2.0 * q).as_slice())
    }

    fn phi_hess_action(&self, _q: &DVector<f64>, v: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_row_slice(1, v.len(), (2.0 * v).as_slice())
    }
}

impl MultibodySystem for CirclePendulum {
    fn n_u(&self) -> usize {
        1
    }

    fn tau_max(&self) -> Vec<f64> {
        vec![self.tau_max]
    }

    fn mass_matrix(&self, _q: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::identity(2, 2) * self.mass
    }

    fn bias_and_applied_forces(&self, q: &DVector<f64>, _qdot: &DVector<f64>, u: &Action) -> DVector<f64> {
        // torque τ about the pivot does virtual work τ δθ, δθ = (x δy − y δx) / L²
        let tau = u.0[0] / (self.length * self.length);
        DVector::from_vec(vec![-tau * q[1], -self.mass * self.gravity + tau * q[0]])
    }

    fn total_energy(&self, x: &State) -> f64 {
        0.5 * self.mass * x.qdot().norm_squared() + self.mass * self.gravity * x.q()[1]
    }

    fn segments(&self, q: &DVector<f64>) -> Vec<Segment> {
        vec![Segment::new(Vector2::zeros(), Vector2::new(q[0], q[1]))]
    }
}
