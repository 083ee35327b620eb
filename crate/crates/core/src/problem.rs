//! Problem definition files.
//!
//! ```json
//! {
//!   "mechanism":  { "kind": "linkage" | "circle_pendulum", ... },
//!   "world":      { "obstacles": [...], "workspace": {...}, ... },
//!   "query":      { "start": { "q": [...], "qdot": [...] }, "goal": {...} },
//!   "params":     { "beta": 0.1, "delta": 0.05, "t_m": 0.1, ... },
//!   "integrator": { "h_init": 0.001, ... }
//! }
//! ```
//!
//! Query states are projected onto the state manifold at load; a state that
//! moves by more than [`MAX_QUERY_CORRECTION`] is rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::{ModelSpec, MultibodySystem};
use crate::error::{Error, Result};
use crate::integrator::IntegratorConfig;
use crate::manifold::{self, State};
use crate::planner::PlannerParams;
use crate::world::World;

pub const MAX_QUERY_CORRECTION: f64 = 1e-3;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSpec {
    pub q: Vec<f64>,
    pub qdot: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Query {
    pub start: StateSpec,
    pub goal: StateSpec,
}

/// Integrator settings as written in a file; `delta` falls back to
/// `params.delta`.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSection {
    pub delta: Option<f64>,
    pub h_init: Option<f64>,
    pub h_min: Option<f64>,
    pub h_max: Option<f64>,
    pub eta_f: Option<f64>,
    pub solve_tol: Option<f64>,
    pub broyden_max_iters: Option<usize>,
}

impl IntegratorSection {
    pub fn resolve(&self, params: &PlannerParams) -> IntegratorConfig {
        let d = IntegratorConfig::default();
        IntegratorConfig {
            delta: self.delta.unwrap_or(params.delta),
            h_init: self.h_init.unwrap_or(d.h_init),
            h_min: self.h_min.unwrap_or(d.h_min),
            h_max: self.h_max.unwrap_or(d.h_max),
            eta_f: self.eta_f.unwrap_or(d.eta_f),
            solve_tol: self.solve_tol.unwrap_or(d.solve_tol),
            broyden_max_iters: self.broyden_max_iters.unwrap_or(d.broyden_max_iters),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub mechanism: ModelSpec,
    #[serde(default)]
    pub world: World,
    pub query: Query,
    pub params: PlannerParams,
    #[serde(default)]
    pub integrator: IntegratorSection,
}

/// A validated problem with manifold-consistent query states.
#[derive(Clone, Debug)]
pub struct Problem {
    pub model: ModelSpec,
    pub world: World,
    pub start: State,
    pub goal: State,
    pub params: PlannerParams,
    pub integrator: IntegratorConfig,
}

impl ProblemFile {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn into_problem(self) -> Result<Problem> {
        self.mechanism.validate()?;
        let mech = self.mechanism.as_system();
        let n_links = match &self.mechanism {
            ModelSpec::Linkage(l) => l.links.len(),
            ModelSpec::CirclePendulum(_) => 1,
        };
        self.world.validate(mech.n_q(), n_links)?;
        self.params.validate(mech.d_c())?;
        let integrator = self.integrator.resolve(&self.params);
        integrator.validate()?;
        let start = query_state(mech, &self.query.start, "query.start")?;
        let goal = query_state(mech, &self.query.goal, "query.goal")?;
        Ok(Problem {
            model: self.mechanism,
            world: self.world,
            start,
            goal,
            params: self.params,
            integrator,
        })
    }
}

fn query_state(mech: &dyn MultibodySystem, spec: &StateSpec, field: &str) -> Result<State> {
    let n = mech.n_q();
    if spec.q.len() != n || spec.qdot.len() != n {
        return Err(Error::invalid(format!("{field}: q and qdot need {n} entries each")));
    }
    let raw = State::new(&spec.q, &spec.qdot);
    let projected = manifold::project_to_manifold(mech, &raw)
        .map_err(|e| Error::invalid(format!("{field} cannot be projected onto the state manifold: {e}")))?;
    let moved = projected.distance(&raw);
    if moved > MAX_QUERY_CORRECTION {
        return Err(Error::invalid(format!(
            "{field} is {moved:.3e} away from the state manifold"
        )));
    }
    Ok(projected)
}

impl Problem {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        ProblemFile::from_json(text)?.into_problem()
    }

    pub fn mech(&self) -> &dyn MultibodySystem {
        self.model.as_system()
    }
}
