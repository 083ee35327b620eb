//! Planar workspace: obstacles, workspace bounds and joint limits.
//!
//! Queries are discrete: a state is tested on its own, never the swept
//! motion between two integration steps.

use nalgebra::{DVector, Vector2};
use serde::{Deserialize, Serialize};

use crate::dynamics::MultibodySystem;
use crate::error::{Error, Result};
use crate::manifold::State;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub a: Vector2<f64>,
    pub b: Vector2<f64>,
}

impl Segment {
    pub fn new(a: Vector2<f64>, b: Vector2<f64>) -> Self {
        Segment { a, b }
    }

    pub fn distance_to_point(&self, p: Vector2<f64>) -> f64 {
        let d = self.b - self.a;
        let len2 = d.norm_squared();
        let t = if len2 > 0.0 {
            ((p - self.a).dot(&d) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        (self.a + d * t - p).norm()
    }

    pub fn intersects(&self, other: &Segment) -> bool {
        fn orient(a: Vector2<f64>, b: Vector2<f64>, c: Vector2<f64>) -> f64 {
            (b - a).perp(&(c - a))
        }
        fn on_segment(a: Vector2<f64>, b: Vector2<f64>, p: Vector2<f64>) -> bool {
            p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
        }
        let (p1, p2, p3, p4) = (self.a, self.b, other.a, other.b);
        let d1 = orient(p3, p4, p1);
        let d2 = orient(p3, p4, p2);
        let d3 = orient(p1, p2, p3);
        let d4 = orient(p1, p2, p4);
        if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
            return true;
        }
        (d1 == 0.0 && on_segment(p3, p4, p1))
            || (d2 == 0.0 && on_segment(p3, p4, p2))
            || (d3 == 0.0 && on_segment(p1, p2, p3))
            || (d4 == 0.0 && on_segment(p1, p2, p4))
    }

    pub fn distance_to_segment(&self, other: &Segment) -> f64 {
        if self.intersects(other) {
            return 0.0;
        }
        self.distance_to_point(other.a)
            .min(self.distance_to_point(other.b))
            .min(other.distance_to_point(self.a))
            .min(other.distance_to_point(self.b))
    }
}

/// Axis-aligned box, m.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Aabb {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Aabb {
    pub fn contains(&self, p: Vector2<f64>) -> bool {
        p.x >= self.min[0] && p.x <= self.max[0] && p.y >= self.min[1] && p.y <= self.max[1]
    }

    fn edges(&self) -> [Segment; 4] {
        let c = [
            Vector2::new(self.min[0], self.min[1]),
            Vector2::new(self.max[0], self.min[1]),
            Vector2::new(self.max[0], self.max[1]),
            Vector2::new(self.min[0], self.max[1]),
        ];
        [
            Segment::new(c[0], c[1]),
            Segment::new(c[1], c[2]),
            Segment::new(c[2], c[3]),
            Segment::new(c[3], c[0]),
        ]
    }

    pub fn distance_to_segment(&self, s: &Segment) -> f64 {
        if self.contains(s.a) || self.contains(s.b) {
            return 0.0;
        }
        self.edges()
            .iter()
            .map(|e| e.distance_to_segment(s))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Closed obstacle primitives, m.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Obstacle {
    Circle { center: [f64; 2], radius: f64 },
    Segment { a: [f64; 2], b: [f64; 2] },
    Box { min: [f64; 2], max: [f64; 2] },
}

impl Obstacle {
    pub fn distance_to_segment(&self, s: &Segment) -> f64 {
        match self {
            Obstacle::Circle { center, radius } => {
                (s.distance_to_point(Vector2::new(center[0], center[1])) - radius).max(0.0)
            }
            Obstacle::Segment { a, b } => {
                Segment::new(Vector2::new(a[0], a[1]), Vector2::new(b[0], b[1])).distance_to_segment(s)
            }
            Obstacle::Box { min, max } => Aabb { min: *min, max: *max }.distance_to_segment(s),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct World {
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
    /// Bounds on every link endpoint; `null` means unbounded.
    #[serde(default)]
    pub workspace: Option<Aabb>,
    /// Closed `[lo, hi]` range per joint coordinate, `null` for unlimited.
    #[serde(default)]
    pub joint_limits: Vec<Option<[f64; 2]>>,
    /// m, half-thickness of every link for obstacle tests.
    #[serde(default)]
    pub link_radius: f64,
    /// Link pairs tested against each other.
    #[serde(default)]
    pub self_collision_pairs: Vec<[usize; 2]>,
}

impl World {
    pub fn validate(&self, n_q: usize, n_links: usize) -> Result<()> {
        for (i, o) in self.obstacles.iter().enumerate() {
            match o {
                Obstacle::Circle { radius, .. } if !(*radius > 0.0) => {
                    return Err(Error::invalid(format!("world.obstacles[{i}].radius must be positive")));
                }
                Obstacle::Box { min, max } if !(min[0] < max[0] && min[1] < max[1]) => {
                    return Err(Error::invalid(format!("world.obstacles[{i}]: min must be below max")));
                }
                _ => {}
            }
        }
        if let Some(ws) = &self.workspace {
            if !(ws.min[0] < ws.max[0] && ws.min[1] < ws.max[1]) {
                return Err(Error::invalid("world.workspace: min must be below max"));
            }
        }
        if self.joint_limits.len() > n_q {
            return Err(Error::invalid("world.joint_limits has more entries than joints"));
        }
        for (i, lim) in self.joint_limits.iter().enumerate() {
            if lim.is_some_and(|[lo, hi]| !(lo < hi)) {
                return Err(Error::invalid(format!("world.joint_limits[{i}]: lo must be below hi")));
            }
        }
        if !(self.link_radius >= 0.0) {
            return Err(Error::invalid("world.link_radius must be non-negative"));
        }
        for (i, [a, b]) in self.self_collision_pairs.iter().enumerate() {
            if *a >= n_links || *b >= n_links {
                return Err(Error::invalid(format!("world.self_collision_pairs[{i}] is out of range")));
            }
        }
        Ok(())
    }
}

/// True when any link touches an obstacle or a listed link pair touches.
pub fn collision(world: &World, mech: &dyn MultibodySystem, x: &State) -> bool {
    if world.obstacles.is_empty() && world.self_collision_pairs.is_empty() {
        return false;
    }
    let segs = mech.segments(&x.q().into_owned());
    let hit_obstacle = segs.iter().any(|s| {
        world
            .obstacles
            .iter()
            .any(|o| o.distance_to_segment(s) <= world.link_radius)
    });
    hit_obstacle
        || world.self_collision_pairs.iter().any(|&[a, b]| {
            a < segs.len() && b < segs.len() && segs[a].distance_to_segment(&segs[b]) <= 2.0 * world.link_radius
        })
}

/// True when a joint sits at or beyond a limit, or a link endpoint leaves
/// the workspace box.
pub fn out_of_workspace(world: &World, mech: &dyn MultibodySystem, x: &State) -> bool {
    let q = x.q();
    let limit_hit = world
        .joint_limits
        .iter()
        .enumerate()
        .any(|(i, lim)| lim.is_some_and(|[lo, hi]| q[i] <= lo || q[i] >= hi));
    if limit_hit {
        return true;
    }
    match &world.workspace {
        Some(ws) => mech
            .segments(&DVector::from_iterator(q.len(), q.iter().copied()))
            .iter()
            .any(|s| !ws.contains(s.a) || !ws.contains(s.b)),
        None => false,
    }
}
