//! Time series of replayed action sequences, for drift and energy plots.

use serde::{Deserialize, Serialize};

use crate::atlas::AtlasParams;
use crate::dynamics::MultibodySystem;
use crate::error::{Error, Result};
use crate::integrator::{rk4_ode_step, IntegratorConfig};
use crate::manifold::{self, State};
use crate::planner::{replay_trajectory, Trajectory};
use crate::world::World;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IntegratorKind {
    /// Implicit trapezoidal steps in chart coordinates.
    AtlasTrap,
    /// Fixed-step RK4 on the unconstrained ODE form.
    Rk4Ode,
}

#[derive(Clone, Debug)]
pub struct SeriesPoint {
    pub t: f64,
    pub x: State,
    /// `‖F(x)‖_∞`
    pub residual: f64,
    /// J
    pub energy: f64,
}

fn point(mech: &dyn MultibodySystem, t: f64, x: State) -> Result<SeriesPoint> {
    Ok(SeriesPoint {
        t,
        residual: manifold::residual_norm(mech, &x)?,
        energy: mech.total_energy(&x),
        x,
    })
}

/// Replays the action sequence of `traj` with the chosen integrator.
/// `rk4_step` is the fixed step of the RK4 mode.
pub fn integrate_series(
    mech: &dyn MultibodySystem,
    world: &World,
    atlas_params: AtlasParams,
    cfg: &IntegratorConfig,
    kind: IntegratorKind,
    rk4_step: f64,
    traj: &Trajectory,
) -> Result<Vec<SeriesPoint>> {
    match kind {
        IntegratorKind::AtlasTrap => replay_trajectory(mech, world, atlas_params, cfg, traj)?
            .into_iter()
            .map(|(t, x)| point(mech, t, x))
            .collect(),
        IntegratorKind::Rk4Ode => {
            if !(rk4_step > 0.0) {
                return Err(Error::invalid("rk4 step must be positive"));
            }
            let first = traj.samples.first().ok_or_else(|| Error::invalid("trajectory has no samples"))?;
            let mut x = first.x.clone();
            let mut t = first.t;
            let mut out = vec![point(mech, t, x.clone())?];
            for pair in traj.samples.windows(2) {
                let end = pair[1].t;
                while end - t > 1e-12 {
                    let h = rk4_step.min(end - t);
                    x = rk4_ode_step(mech, &x, &pair[0].u, h)?;
                    t += h;
                    if !x.0.iter().all(|v| v.is_finite()) {
                        return Err(Error::invalid(format!("rk4 state is not finite at t = {t:.6}")));
                    }
                    out.push(point(mech, t, x.clone())?);
                }
            }
            Ok(out)
        }
    }
}
