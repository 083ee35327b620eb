use serde::{Deserialize, Serialize};

use super::simulate::{simulate, SimConfig};
use super::tree::Tree;
use crate::atlas::{Atlas, AtlasOverlay, AtlasParams};
use crate::dynamics::{Action, MultibodySystem};
use crate::error::{Error, Result};
use crate::integrator::IntegratorConfig;
use crate::manifold::State;
use crate::world::World;

/// `u` is applied from `t` until the next sample's time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub x: State,
    pub u: Action,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
}

impl Trajectory {
    pub fn total_time(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.t)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Joins the start-tree path to `fwd` with the time-reversed goal-tree path
/// from `bwd`.
///
/// The two junction nodes are within the connection distance but not
/// identical; the goal-tree junction node itself is dropped and its action
/// and duration take the path from `fwd` onward.
pub fn extract_trajectory(start_tree: &Tree, fwd: usize, goal_tree: &Tree, bwd: usize, n_u: usize) -> Trajectory {
    let fpath = start_tree.path_from_root(fwd);
    let mut bpath = goal_tree.path_from_root(bwd);
    bpath.reverse();

    let mut samples = Vec::with_capacity(fpath.len() + bpath.len());
    let mut t = 0.0;
    for (i, &id) in fpath.iter().enumerate() {
        let node = start_tree.node(id);
        t += node.duration;
        let u = match fpath.get(i + 1) {
            Some(&next) => start_tree.node(next).action.clone(),
            None => goal_tree.node(bpath[0]).action.clone(),
        };
        samples.push(TrajectorySample {
            t,
            x: node.state.clone(),
            u: u.unwrap_or_else(|| Action::zeros(n_u)),
        });
    }
    for w in 1..bpath.len() {
        let prev = goal_tree.node(bpath[w - 1]);
        let node = goal_tree.node(bpath[w]);
        t += prev.duration;
        samples.push(TrajectorySample {
            t,
            x: node.state.clone(),
            u: node.action.clone().unwrap_or_else(|| Action::zeros(n_u)),
        });
    }
    Trajectory { samples }
}

/// Re-integrates the action sequence of `traj` from its first state in a
/// fresh atlas. Returns every accepted state with its time.
pub fn replay_trajectory(
    mech: &dyn MultibodySystem,
    world: &World,
    atlas_params: AtlasParams,
    cfg: &IntegratorConfig,
    traj: &Trajectory,
) -> Result<Vec<(f64, State)>> {
    let first = traj.samples.first().ok_or_else(|| Error::invalid("trajectory has no samples"))?;
    let mut atlas = Atlas::new(atlas_params);
    let mut chart = atlas.add_chart(mech, &first.x, None)?;
    let mut x = first.x.clone();
    let mut out = vec![(first.t, x.clone())];
    for (i, pair) in traj.samples.windows(2).enumerate() {
        let dt = pair[1].t - pair[0].t;
        let sim = SimConfig {
            mech,
            world,
            integrator: cfg,
            t_max: dt,
            direction: 1.0,
        };
        let mut ov = AtlasOverlay::new(&atlas);
        let res = simulate(&sim, &mut ov, &x, chart, &pair[0].u, None);
        let changes = ov.into_changes();
        if res.blocked || (res.duration - dt).abs() > cfg.h_min {
            return Err(Error::invalid(format!(
                "replay stopped in segment {i} at t = {:.6}",
                pair[0].t + res.duration
            )));
        }
        atlas.commit(changes);
        let mut t = pair[0].t;
        for (s, state) in res.steps.iter().zip(&res.trace) {
            t += s.h.abs();
            out.push((t, state.clone()));
        }
        x = res.state;
        chart = res.chart;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atlas::TreeId;
    use crate::planner::tree::TreeNode;

    fn node(q: f64, parent: usize, u: f64, duration: f64) -> TreeNode {
        TreeNode {
            state: State::new(&[q], &[0.0]),
            parent: Some(parent),
            action: Some(Action::from_slice(&[u])),
            duration,
            chart: 0,
            steps: Vec::new(),
        }
    }

    #[test]
    fn joins_both_branches() {
        let mut s = Tree::new(TreeId::Start, State::new(&[0.0], &[0.0]), 0);
        let a = s.push(node(1.0, 0, 4.0, 0.1));
        let mut g = Tree::new(TreeId::Goal, State::new(&[3.0], &[0.0]), 1);
        let b = g.push(node(2.0, 0, -4.0, 0.2));
        let c = g.push(node(1.01, b, 0.0, 0.05));

        let traj = extract_trajectory(&s, a, &g, c, 1);
        let q: Vec<f64> = traj.samples.iter().map(|x| x.x.q()[0]).collect();
        assert_eq!(q, vec![0.0, 1.0, 2.0, 3.0]);
        let u: Vec<f64> = traj.samples.iter().map(|x| x.u.0[0]).collect();
        assert_eq!(u, vec![4.0, 0.0, -4.0, 0.0]);
        let t: Vec<f64> = traj.samples.iter().map(|x| x.t).collect();
        assert!((t[1] - 0.1).abs() < 1e-15 && (t[2] - 0.15).abs() < 1e-15 && (t[3] - 0.35).abs() < 1e-15);
        assert!(t.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn connection_at_start_root() {
        let s = Tree::new(TreeId::Start, State::new(&[0.0], &[0.0]), 0);
        let mut g = Tree::new(TreeId::Goal, State::new(&[2.0], &[0.0]), 1);
        let b = g.push(node(0.01, 0, 3.0, 0.4));
        let traj = extract_trajectory(&s, 0, &g, b, 1);
        assert_eq!(traj.len(), 2);
        assert_eq!(traj.samples[0].u.0[0], 3.0);
        assert!((traj.total_time() - 0.4).abs() < 1e-15);
    }
}
