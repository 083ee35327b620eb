//! Kinodynamic planning on implicitly defined state manifolds.
//!
//! The state `x = (q, q̇)` of a closed-chain mechanism is confined to the
//! manifold `F(x) = [Φ(q); Φ_q q̇] = 0`. The planner covers the explored
//! part of that manifold with an [`atlas`] of tangent-space charts,
//! integrates the constrained dynamics inside those charts without drift
//! ([`integrator`]), and grows a bidirectional RRT between two dynamic
//! states ([`planner`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod atlas;
pub mod dynamics;
pub mod error;
pub mod integrator;
pub mod io;
pub mod manifold;
pub mod par;
pub mod planner;
pub mod problem;
pub mod series;
pub mod world;

pub use error::{Error, Result};
pub use manifold::{ConstraintSystem, State};
pub use problem::Problem;
