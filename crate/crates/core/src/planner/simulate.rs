//! Action simulation with chart bookkeeping.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::atlas::{needs_new_chart, Atlas, AtlasOverlay};
use crate::dynamics::{Action, MultibodySystem};
use crate::error::{Error, Result};
use crate::integrator::{self, IntegratorConfig};
use crate::manifold::State;
use crate::world::{collision, out_of_workspace, World};

/// One accepted integration step: the chart it was taken in and its signed size.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub chart: usize,
    pub h: f64,
}

/// Stop condition of a simulation toward a target point.
#[derive(Clone, Copy, Debug)]
pub struct Target<'a> {
    pub point: &'a DVector<f64>,
    pub radius: f64,
}

#[derive(Clone, Copy)]
pub struct SimConfig<'a> {
    pub mech: &'a dyn MultibodySystem,
    pub world: &'a World,
    pub integrator: &'a IntegratorConfig,
    /// s, maximum simulated span
    pub t_max: f64,
    /// +1 forward in time, −1 backward.
    pub direction: f64,
}

#[derive(Clone, Debug)]
pub struct SimOutcome {
    pub state: State,
    /// Chart holding the final state.
    pub chart: usize,
    pub steps: Vec<StepRecord>,
    /// s, non-negative
    pub duration: f64,
    /// Stopped by a collision, a workspace limit or an integration failure.
    pub blocked: bool,
    /// Accepted states after the start, in order.
    pub trace: Vec<State>,
}

const TIME_EPS: f64 = 1e-12;

/// Integrates `u` from `start` until `t_max` elapses, the state gets within
/// `target.radius` of the target, or the motion is blocked. Charts spawned
/// along the way go into `atlas`.
pub fn simulate(
    sim: &SimConfig<'_>,
    atlas: &mut AtlasOverlay<'_>,
    start: &State,
    chart: usize,
    u: &Action,
    target: Option<Target<'_>>,
) -> SimOutcome {
    let cfg = sim.integrator;
    let params = *atlas.params();
    let mut c = chart;
    let mut x = start.clone();
    let mut t = 0.0;
    let mut h = cfg.h_init.copysign(sim.direction);
    let mut fresh = false;
    let mut steps = Vec::new();
    let mut trace = Vec::new();
    let mut blocked = false;

    loop {
        let remaining = sim.t_max - t;
        if remaining <= TIME_EPS {
            break;
        }
        if let Some(tg) = target {
            if (&x.0 - tg.point).norm() <= tg.radius {
                break;
            }
        }
        let h_try = h.abs().min(remaining);
        if h_try < cfg.h_min {
            break;
        }
        let h_try = h_try.copysign(sim.direction);

        let chart_ref = atlas.chart(c);
        let y = chart_ref.coords(&x);
        let res = match integrator::next_state(sim.mech, chart_ref, &x, &y, u, h_try, cfg) {
            Ok(r) => r,
            Err(_) => {
                blocked = true;
                break;
            }
        };
        if collision(sim.world, sim.mech, &res.x_next) || out_of_workspace(sim.world, sim.mech, &res.x_next) {
            blocked = true;
            break;
        }

        let mut next_chart = c;
        if needs_new_chart(chart_ref, &params, &x, &res.x_next, &y, &res.y_next) {
            if !fresh {
                match atlas.add_chart(sim.mech, &x, Some(c)) {
                    Ok(k) => {
                        c = k;
                        fresh = true;
                        continue;
                    }
                    Err(_) => {
                        blocked = true;
                        break;
                    }
                }
            }
        } else if !atlas.in_polytope(c, &res.y_next) {
            match atlas.neighbor_chart(c, &res.y_next) {
                Ok(k) => next_chart = k,
                Err(Error::NoNeighbor { .. }) if !fresh => match atlas.add_chart(sim.mech, &x, Some(c)) {
                    Ok(k) => {
                        c = k;
                        fresh = true;
                        continue;
                    }
                    Err(_) => {
                        blocked = true;
                        break;
                    }
                },
                Err(_) => {}
            }
        }

        steps.push(StepRecord { chart: c, h: res.h_used });
        t += res.h_used.abs();
        h = res.h_next;
        x = res.x_next;
        trace.push(x.clone());
        c = next_chart;
        fresh = false;
    }

    SimOutcome {
        state: x,
        chart: c,
        steps,
        duration: t,
        blocked,
        trace,
    }
}

/// Re-runs recorded steps exactly. The charts must exist in `atlas`.
pub fn replay_steps(
    mech: &dyn MultibodySystem,
    atlas: &Atlas,
    cfg: &IntegratorConfig,
    start: &State,
    u: &Action,
    steps: &[StepRecord],
) -> Result<State> {
    Ok(replay_trace(mech, atlas, cfg, start, u, steps)?
        .pop()
        .unwrap_or_else(|| start.clone()))
}

/// Like [`replay_steps`], returning every state after `start`.
pub fn replay_trace(
    mech: &dyn MultibodySystem,
    atlas: &Atlas,
    cfg: &IntegratorConfig,
    start: &State,
    u: &Action,
    steps: &[StepRecord],
) -> Result<Vec<State>> {
    let mut x = start.clone();
    let mut out = Vec::with_capacity(steps.len());
    for s in steps {
        let chart = atlas.chart(s.chart);
        let y = chart.coords(&x);
        let (next, _, _) = integrator::step(mech, chart, &x, &y, u, s.h, cfg)?;
        out.push(next.clone());
        x = next;
    }
    Ok(out)
}
