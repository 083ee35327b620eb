//! Shipped example problems.

use super::{CirclePendulum, Linkage, ModelSpec};
use crate::problem::ProblemFile;

pub const PENDULUM_JSON: &str = include_str!("../../problems/pendulum.json");
pub const FOUR_BAR_JSON: &str = include_str!("../../problems/fourbar.json");
pub const FIVE_BAR_JSON: &str = include_str!("../../problems/fivebar.json");

/// Parsed problem file of a shipped example, by name
/// (`pendulum`, `fourbar` or `fivebar`).
pub fn builtin_problem(name: &str) -> Option<ProblemFile> {
    let text = match name {
        "pendulum" => PENDULUM_JSON,
        "fourbar" => FOUR_BAR_JSON,
        "fivebar" => FIVE_BAR_JSON,
        _ => return None,
    };
    Some(ProblemFile::from_json(text).expect("shipped problem files parse"))
}

fn linkage(name: &str) -> Linkage {
    match builtin_problem(name).map(|p| p.mechanism) {
        Some(ModelSpec::Linkage(l)) => l,
        _ => unreachable!("{name} is a linkage"),
    }
}

/// Drag-link four-bar with the crank actuated.
pub fn four_bar() -> Linkage {
    linkage("fourbar")
}

/// Planar five-bar with both base joints actuated and a spring between the
/// distal links.
pub fn five_bar() -> Linkage {
    linkage("fivebar")
}

pub fn circle_pendulum() -> CirclePendulum {
    match builtin_problem("pendulum").map(|p| p.mechanism) {
        Some(ModelSpec::CirclePendulum(p)) => p,
        _ => unreachable!("pendulum is a circle pendulum"),
    }
}
