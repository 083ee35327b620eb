//! Bidirectional kinodynamic RRT on the atlas.
//!
//! The start tree grows forward in time and the goal tree backward. Each
//! iteration samples a chart of the active tree, extends that tree toward
//! the sample, extends the other tree toward the new node, and swaps roles.
//!
//! Candidate actions of one extension are simulated independently against
//! a read-only atlas; only the winner's new charts are committed. The result
//! is therefore the same with or without parallel evaluation.

mod simulate;
mod trajectory;
mod tree;

use std::time::Instant;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::atlas::{Atlas, AtlasChanges, AtlasOverlay, AtlasParams, TreeId};
use crate::dynamics::{action_set, ActionSet, MultibodySystem};
use crate::error::{Error, Result};
use crate::integrator::IntegratorConfig;
use crate::manifold::{self, State};
use crate::par;
use crate::world::{collision, out_of_workspace, World};

pub use simulate::{replay_steps, replay_trace, simulate, SimConfig, SimOutcome, StepRecord, Target};
pub use trajectory::{extract_trajectory, replay_trajectory, Trajectory, TrajectorySample};
pub use tree::{Tree, TreeNode};

fn default_parallel() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannerParams {
    /// Connection distance between the trees.
    pub beta: f64,
    /// Goal-proximity radius of a simulation.
    pub delta: f64,
    /// s, maximum span of one action simulation.
    pub t_m: f64,
    /// Defaults to `d_C`.
    #[serde(default)]
    pub rho_s: Option<f64>,
    /// Defaults to `rho_s / 2`.
    #[serde(default)]
    pub rho: Option<f64>,
    pub cos_alpha: f64,
    pub epsilon: f64,
    pub max_iterations: usize,
    #[serde(default)]
    pub seed: u64,
    /// Evaluate candidate actions concurrently.
    #[serde(default = "default_parallel")]
    pub parallel: bool,
}

impl PlannerParams {
    pub fn atlas_params(&self, d_c: usize) -> AtlasParams {
        let rho_s = self.rho_s.unwrap_or(d_c as f64);
        AtlasParams {
            rho_s,
            rho: self.rho.unwrap_or(rho_s / 2.0),
            epsilon: self.epsilon,
            cos_alpha: self.cos_alpha,
        }
    }

    pub fn validate(&self, d_c: usize) -> Result<()> {
        if !(self.beta > 0.0) {
            return Err(Error::invalid("params.beta must be positive"));
        }
        if !(self.delta > 0.0) {
            return Err(Error::invalid("params.delta must be positive"));
        }
        if !(self.t_m > 0.0) {
            return Err(Error::invalid("params.t_m must be positive"));
        }
        if self.rho_s.is_some_and(|r| !(r > 0.0)) {
            return Err(Error::invalid("params.rho_s must be positive"));
        }
        self.atlas_params(d_c).validate()
    }
}

/// Per-run counters, the columns of the benchmark tables.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub samples: usize,
    pub charts: usize,
    pub nodes_fwd: usize,
    pub nodes_bwd: usize,
    pub iterations: usize,
    pub success: bool,
    /// s
    pub wall_time_s: f64,
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub trajectory: Trajectory,
    pub stats: RunStats,
    /// Junction nodes in the start and goal trees.
    pub connection: (usize, usize),
}

struct Candidate {
    outcome: SimOutcome,
    changes: AtlasChanges,
    distance: f64,
}

pub struct Planner<'a> {
    mech: &'a dyn MultibodySystem,
    world: &'a World,
    params: PlannerParams,
    integrator: IntegratorConfig,
    actions: ActionSet,
    atlas: Atlas,
    trees: [Tree; 2],
    rng: ChaCha8Rng,
    samples: usize,
    iterations: usize,
}

impl<'a> Planner<'a> {
    pub fn new(
        mech: &'a dyn MultibodySystem,
        world: &'a World,
        start: &State,
        goal: &State,
        params: PlannerParams,
        integrator: IntegratorConfig,
    ) -> Result<Self> {
        let d_c = mech.d_c();
        params.validate(d_c)?;
        integrator.validate()?;
        for (name, x) in [("start", start), ("goal", goal)] {
            if x.0.len() != 2 * mech.n_q() {
                return Err(Error::Dimension {
                    expected: 2 * mech.n_q(),
                    got: x.0.len(),
                });
            }
            if !manifold::is_consistent(mech, x, integrator.eta_f) {
                return Err(Error::invalid(format!("query.{name} is not on the state manifold")));
            }
            if collision(world, mech, x) || out_of_workspace(world, mech, x) {
                return Err(Error::invalid(format!("query.{name} is not collision-free")));
            }
        }
        let mut atlas = Atlas::init(mech, params.atlas_params(d_c), start, goal)?;
        atlas.note_node(0, TreeId::Start);
        atlas.note_node(1, TreeId::Goal);
        Ok(Planner {
            mech,
            world,
            actions: action_set(mech),
            atlas,
            trees: [
                Tree::new(TreeId::Start, start.clone(), 0),
                Tree::new(TreeId::Goal, goal.clone(), 1),
            ],
            rng: ChaCha8Rng::seed_from_u64(params.seed),
            params,
            integrator,
            samples: 0,
            iterations: 0,
        })
    }

    pub fn atlas(&self) -> &Atlas {
        &self.atlas
    }

    pub fn tree(&self, id: TreeId) -> &Tree {
        &self.trees[id.index()]
    }

    pub fn integrator(&self) -> &IntegratorConfig {
        &self.integrator
    }

    pub fn stats(&self, success: bool, wall_time_s: f64) -> RunStats {
        RunStats {
            samples: self.samples,
            charts: self.atlas.len(),
            nodes_fwd: self.trees[0].len(),
            nodes_bwd: self.trees[1].len(),
            iterations: self.iterations,
            success,
            wall_time_s,
        }
    }

    /// Simulates every action from `node` toward `target` and adds the end
    /// state closest to the target. Returns the new node, or `None` if the
    /// best end state is already in the tree.
    pub fn extend(&mut self, tree: TreeId, node: usize, target: &DVector<f64>) -> Option<usize> {
        let t = &self.trees[tree.index()];
        let from = t.node(node);
        let sim = SimConfig {
            mech: self.mech,
            world: self.world,
            integrator: &self.integrator,
            t_max: self.params.t_m,
            direction: t.direction(),
        };
        let atlas = &self.atlas;
        let goal_radius = self.params.delta;
        let candidates = par::map_collect(&self.actions.actions, self.params.parallel, |_, u| {
            let mut overlay = AtlasOverlay::new(atlas);
            let outcome = simulate(
                &sim,
                &mut overlay,
                &from.state,
                from.chart,
                u,
                Some(Target {
                    point: target,
                    radius: goal_radius,
                }),
            );
            let distance = (&outcome.state.0 - target).norm();
            Candidate {
                outcome,
                changes: overlay.into_changes(),
                distance,
            }
        });

        let mut best: Option<(usize, &Candidate)> = None;
        for (i, c) in candidates.iter().enumerate() {
            if best.is_none_or(|(_, b)| c.distance < b.distance) {
                best = Some((i, c));
            }
        }
        let (ai, _) = best?;
        let winner = candidates.into_iter().nth(ai)?;
        if winner.outcome.steps.is_empty() || t.contains(&winner.outcome.state, self.integrator.eta_f) {
            return None;
        }
        self.atlas.commit(winner.changes);
        let chart = winner.outcome.chart;
        self.atlas.note_node(chart, tree);
        let id = self.trees[tree.index()].push(TreeNode {
            state: winner.outcome.state,
            parent: Some(node),
            action: Some(self.actions.actions[ai].clone()),
            duration: winner.outcome.duration,
            chart,
            steps: winner.outcome.steps,
        });
        Some(id)
    }

    pub fn run(&mut self) -> Result<Solution> {
        let clock = Instant::now();
        let beta = self.params.beta;
        let n_u = self.mech.n_u();
        let connected = |p: &Self, a: TreeId, la: usize, lb: usize| {
            let xa = &p.trees[a.index()].node(la).state;
            let xb = &p.trees[a.other().index()].node(lb).state;
            xa.distance(xb) < beta
        };
        let finish = |p: &Self, a: TreeId, la: usize, lb: usize, elapsed: f64| {
            let (fwd, bwd) = match a {
                TreeId::Start => (la, lb),
                TreeId::Goal => (lb, la),
            };
            Solution {
                trajectory: extract_trajectory(&p.trees[0], fwd, &p.trees[1], bwd, n_u),
                stats: p.stats(true, elapsed),
                connection: (fwd, bwd),
            }
        };

        if connected(self, TreeId::Start, 0, 0) {
            let s = finish(self, TreeId::Start, 0, 0, clock.elapsed().as_secs_f64());
            return Ok(Solution {
                trajectory: Trajectory {
                    samples: s.trajectory.samples.into_iter().take(1).collect(),
                },
                ..s
            });
        }

        let mut active = TreeId::Start;
        while self.iterations < self.params.max_iterations {
            self.iterations += 1;
            let (x_r, _) = self.atlas.sample(active, &mut self.rng);
            self.samples += 1;
            let n = self.trees[active.index()].nearest(&x_r);
            let l = self.extend(active, n, &x_r).unwrap_or(n);

            let other = active.other();
            let x_l = self.trees[active.index()].node(l).state.0.clone();
            let n2 = self.trees[other.index()].nearest(&x_l);
            let l2 = self.extend(other, n2, &x_l).unwrap_or(n2);

            if connected(self, active, l, l2) {
                return Ok(finish(self, active, l, l2, clock.elapsed().as_secs_f64()));
            }
            active = other;
        }
        Err(Error::PlanningTimeout(Box::new(self.stats(false, clock.elapsed().as_secs_f64()))))
    }
}

/// Plans from `start` to `goal`.
pub fn plan(
    mech: &dyn MultibodySystem,
    world: &World,
    start: &State,
    goal: &State,
    params: PlannerParams,
    integrator: IntegratorConfig,
) -> Result<Solution> {
    Planner::new(mech, world, start, goal, params, integrator)?.run()
}
