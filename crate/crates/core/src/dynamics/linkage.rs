//! Planar linkages in relative joint coordinates.
//!
//! Joint `i` attaches link `i` to its parent link (or to the ground), so the
//! links form a tree with one generalized coordinate per joint. Kinematic
//! loops are closed by [`LoopClosure`] constraints, which are the rows of
//! `Φ(q)`.
//!
//! Every link carries a frame at its proximal joint whose x axis runs along
//! the link. Point offsets (`com`, closure points, spring anchors) are given
//! in that frame.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use super::{Action, MultibodySystem};
use crate::error::{Error, Result};
use crate::manifold::{ConstraintSystem, State};
use crate::world::Segment;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Link {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// kg
    pub mass: f64,
    /// kg·m², about the center of mass
    pub inertia: f64,
    /// m, in the link frame
    pub com: [f64; 2],
    /// m, along the link x axis; used for drawing and collision
    pub length: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JointKind {
    Revolute,
    Prismatic,
}

fn default_axis() -> [f64; 2] {
    [1.0, 0.0]
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Joint {
    #[serde(rename = "type")]
    pub kind: JointKind,
    /// Parent link index, `null` for the ground. Must precede this joint.
    pub parent: Option<usize>,
    /// m, joint location in the parent frame
    pub placement: [f64; 2],
    /// Unit sliding direction in the parent frame (prismatic joints only).
    #[serde(default = "default_axis")]
    pub axis: [f64; 2],
    /// rad, constant orientation offset of the child frame
    #[serde(default)]
    pub angle: f64,
}

/// A point fixed to a link, or to the ground when `link` is `null`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkPoint {
    pub link: Option<usize>,
    /// m
    pub point: [f64; 2],
}

/// Coincidence of two points (2 equations). With `angle` set, the relative
/// orientation `θ_a − θ_b` is also pinned to that value (3 equations).
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoopClosure {
    pub a: LinkPoint,
    pub b: LinkPoint,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angle: Option<f64>,
}

impl LoopClosure {
    fn n_eq(&self) -> usize {
        if self.angle.is_some() {
            3
        } else {
            2
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Spring {
    /// N·m/rad about a joint coordinate.
    Torsional { joint: usize, stiffness: f64, rest: f64 },
    /// N/m between two points.
    Linear {
        a: LinkPoint,
        b: LinkPoint,
        stiffness: f64,
        rest: f64,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Linkage {
    /// m/s²
    pub gravity: [f64; 2],
    pub links: Vec<Link>,
    pub joints: Vec<Joint>,
    pub loop_closures: Vec<LoopClosure>,
    /// Indices of the actuated joints.
    pub actuated: Vec<usize>,
    /// N·m (or N for prismatic joints), one per actuated joint.
    pub tau_max: Vec<f64>,
    #[serde(default)]
    pub springs: Vec<Spring>,
}

/// World placement of every link frame.
#[derive(Clone, Debug)]
pub struct Frames {
    pub origin: Vec<Vector2<f64>>,
    pub theta: Vec<f64>,
    rot: Vec<Matrix2<f64>>,
    /// World sliding axis of each prismatic joint (zero for revolute ones).
    axis: Vec<Vector2<f64>>,
}

fn rot(theta: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(c, -s, s, c)
}

/// 90° rotation, `J v = ẑ × v`.
fn perp(v: Vector2<f64>) -> Vector2<f64> {
    Vector2::new(-v.y, v.x)
}

fn v2(p: [f64; 2]) -> Vector2<f64> {
    Vector2::new(p[0], p[1])
}

impl Linkage {
    pub fn validate(&self) -> Result<()> {
        let n = self.joints.len();
        if n == 0 {
            return Err(Error::invalid("mechanism.joints must not be empty"));
        }
        if self.links.len() != n {
            return Err(Error::invalid(format!(
                "mechanism.links has {} entries but mechanism.joints has {n}",
                self.links.len()
            )));
        }
        for (i, link) in self.links.iter().enumerate() {
            if !(link.mass > 0.0) {
                return Err(Error::invalid(format!("mechanism.links[{i}].mass must be positive")));
            }
            if !(link.inertia > 0.0) {
                return Err(Error::invalid(format!("mechanism.links[{i}].inertia must be positive")));
            }
        }
        for (i, joint) in self.joints.iter().enumerate() {
            if joint.parent.is_some_and(|p| p >= i) {
                return Err(Error::invalid(format!(
                    "mechanism.joints[{i}].parent must refer to an earlier link"
                )));
            }
            if joint.kind == JointKind::Prismatic && (v2(joint.axis).norm() - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(format!("mechanism.joints[{i}].axis must be a unit vector")));
            }
        }
        let check_point = |lp: &LinkPoint, field: String| -> Result<()> {
            if lp.link.is_some_and(|l| l >= n) {
                return Err(Error::invalid(format!("{field}.link is out of range")));
            }
            Ok(())
        };
        for (i, c) in self.loop_closures.iter().enumerate() {
            check_point(&c.a, format!("mechanism.loop_closures[{i}].a"))?;
            check_point(&c.b, format!("mechanism.loop_closures[{i}].b"))?;
        }
        for (i, s) in self.springs.iter().enumerate() {
            match s {
                Spring::Torsional { joint, .. } if *joint >= n => {
                    return Err(Error::invalid(format!("mechanism.springs[{i}].joint is out of range")));
                }
                Spring::Linear { a, b, .. } => {
                    check_point(a, format!("mechanism.springs[{i}].a"))?;
                    check_point(b, format!("mechanism.springs[{i}].b"))?;
                }
                _ => {}
            }
        }
        if self.tau_max.len() != self.actuated.len() {
            return Err(Error::invalid(
                "mechanism.tau_max must have one entry per actuated joint",
            ));
        }
        if self.tau_max.iter().any(|t| !(*t >= 0.0)) {
            return Err(Error::invalid("mechanism.tau_max entries must be non-negative"));
        }
        for (i, &a) in self.actuated.iter().enumerate() {
            if a >= n || self.actuated[..i].contains(&a) {
                return Err(Error::invalid(format!("mechanism.actuated[{i}] is invalid")));
            }
        }
        let n_e: usize = self.loop_closures.iter().map(LoopClosure::n_eq).sum();
        if n_e >= n {
            return Err(Error::invalid(format!(
                "mechanism has {n_e} constraint equations for {n} coordinates"
            )));
        }
        if self.actuated.len() > n - n_e {
            return Err(Error::invalid("mechanism.actuated exceeds the mobility of the mechanism"));
        }
        Ok(())
    }

    /// Joint indices from `link` up to the ground, starting with `link`.
    fn chain(&self, link: Option<usize>) -> impl Iterator<Item = usize> + '_ {
        std::iter::successors(link, |&i| self.joints[i].parent)
    }

    fn in_chain(&self, k: usize, link: Option<usize>) -> bool {
        let mut cur = link;
        while let Some(i) = cur {
            if i == k {
                return true;
            }
            if i < k {
                return false;
            }
            cur = self.joints[i].parent;
        }
        false
    }

    pub fn frames(&self, q: &DVector<f64>) -> Frames {
        let n = self.joints.len();
        let mut origin = Vec::with_capacity(n);
        let mut theta = Vec::with_capacity(n);
        let mut axis = Vec::with_capacity(n);
        let mut rots: Vec<Matrix2<f64>> = Vec::with_capacity(n);
        for (i, joint) in self.joints.iter().enumerate() {
            let (o_par, th_par, r) = match joint.parent {
                Some(p) => (origin[p], theta[p], rots[p]),
                None => (Vector2::zeros(), 0.0, Matrix2::identity()),
            };
            match joint.kind {
                JointKind::Revolute => {
                    origin.push(o_par + r * v2(joint.placement));
                    theta.push(th_par + joint.angle + q[i]);
                    axis.push(Vector2::zeros());
                }
                JointKind::Prismatic => {
                    let e = r * v2(joint.axis);
                    origin.push(o_par + r * v2(joint.placement) + e * q[i]);
                    theta.push(th_par + joint.angle);
                    axis.push(e);
                }
            }
            rots.push(rot(theta[i]));
        }
        Frames {
            origin,
            theta,
            rot: rots,
            axis,
        }
    }

    pub fn point(&self, frames: &Frames, lp: &LinkPoint) -> Vector2<f64> {
        match lp.link {
            Some(i) => frames.origin[i] + frames.rot[i] * v2(lp.point),
            None => v2(lp.point),
        }
    }

    /// `∂p/∂q_k` for a world point `p` rigidly attached to a link whose
    /// chain contains joint `k`.
    fn column(&self, frames: &Frames, p: Vector2<f64>, k: usize) -> Vector2<f64> {
        match self.joints[k].kind {
            JointKind::Revolute => perp(p - frames.origin[k]),
            JointKind::Prismatic => frames.axis[k],
        }
    }

    pub fn point_jacobian(&self, frames: &Frames, lp: &LinkPoint) -> DMatrix<f64> {
        let mut jac = DMatrix::zeros(2, self.joints.len());
        self.add_point_jacobian(frames, lp, 1.0, &mut jac, 0);
        jac
    }

    /// Adds `sign · J_p` to rows `row..row + 2` of `out`.
    fn add_point_jacobian(&self, frames: &Frames, lp: &LinkPoint, sign: f64, out: &mut DMatrix<f64>, row: usize) {
        let p = self.point(frames, lp);
        for k in self.chain(lp.link) {
            let c = self.column(frames, p, k) * sign;
            out[(row, k)] += c.x;
            out[(row + 1, k)] += c.y;
        }
    }

    fn add_angular_row(&self, link: Option<usize>, sign: f64, out: &mut DMatrix<f64>, row: usize) {
        for k in self.chain(link) {
            if self.joints[k].kind == JointKind::Revolute {
                out[(row, k)] += sign;
            }
        }
    }

    /// Adds `sign · ∂/∂q [J_p(q) v]` for a point on a link to rows
    /// `row..row + 2` of `out`.
    fn add_point_hess_action(
        &self,
        frames: &Frames,
        lp: &LinkPoint,
        v: &DVector<f64>,
        sign: f64,
        out: &mut DMatrix<f64>,
        row: usize,
    ) {
        let n = self.joints.len();
        let Some(link) = lp.link else {
            return;
        };
        let p = self.point(frames, lp);
        for k in 0..n {
            let mut col = Vector2::zeros();
            let k_moves_p = self.in_chain(k, Some(link));
            for j in self.chain(Some(link)) {
                if v[j] == 0.0 {
                    continue;
                }
                let par = self.joints[j].parent;
                let k_moves_parent = self.in_chain(k, par);
                match self.joints[j].kind {
                    JointKind::Revolute => {
                        let dp = if k_moves_p { self.column(frames, p, k) } else { Vector2::zeros() };
                        let d_pivot = if k_moves_parent {
                            self.column(frames, frames.origin[j], k)
                        } else {
                            Vector2::zeros()
                        };
                        col += perp(dp - d_pivot) * v[j];
                    }
                    JointKind::Prismatic => {
                        if k_moves_parent && self.joints[k].kind == JointKind::Revolute {
                            col += perp(frames.axis[j]) * v[j];
                        }
                    }
                }
            }
            out[(row, k)] += sign * col.x;
            out[(row + 1, k)] += sign * col.y;
        }
    }

    /// Angular velocities and the velocity-product accelerations (`J̇ q̇`) of
    /// every link origin.
    fn bias_kinematics(&self, frames: &Frames, qdot: &DVector<f64>) -> (Vec<f64>, Vec<Vector2<f64>>) {
        let n = self.joints.len();
        let mut omega = Vec::with_capacity(n);
        let mut acc = Vec::with_capacity(n);
        for (i, joint) in self.joints.iter().enumerate() {
            let (w_par, a_par, o_par) = match joint.parent {
                Some(p) => (omega[p], acc[p], frames.origin[p]),
                None => (0.0, Vector2::zeros(), Vector2::zeros()),
            };
            let s = frames.origin[i] - o_par;
            match joint.kind {
                JointKind::Revolute => {
                    acc.push(a_par - s * (w_par * w_par));
                    omega.push(w_par + qdot[i]);
                }
                JointKind::Prismatic => {
                    acc.push(a_par - s * (w_par * w_par) + perp(frames.axis[i]) * (2.0 * w_par * qdot[i]));
                    omega.push(w_par);
                }
            }
        }
        (omega, acc)
    }

    fn point_bias_acceleration(
        &self,
        frames: &Frames,
        omega: &[f64],
        acc: &[Vector2<f64>],
        lp: &LinkPoint,
    ) -> Vector2<f64> {
        match lp.link {
            Some(i) => {
                let r = self.point(frames, lp) - frames.origin[i];
                acc[i] - r * (omega[i] * omega[i])
            }
            None => Vector2::zeros(),
        }
    }

    fn com_point(&self, i: usize) -> LinkPoint {
        LinkPoint {
            link: Some(i),
            point: self.links[i].com,
        }
    }

    fn potential_energy(&self, q: &DVector<f64>) -> f64 {
        let frames = self.frames(q);
        let g = v2(self.gravity);
        let mut v = 0.0;
        for (i, link) in self.links.iter().enumerate() {
            v -= link.mass * g.dot(&self.point(&frames, &self.com_point(i)));
        }
        for spring in &self.springs {
            v += match spring {
                Spring::Torsional { joint, stiffness, rest } => 0.5 * stiffness * (q[*joint] - rest).powi(2),
                Spring::Linear { a, b, stiffness, rest } => {
                    let d = (self.point(&frames, a) - self.point(&frames, b)).norm();
                    0.5 * stiffness * (d - rest).powi(2)
                }
            };
        }
        v
    }
}

impl ConstraintSystem for Linkage {
    fn n_q(&self) -> usize {
        self.joints.len()
    }

    fn n_e(&self) -> usize {
        self.loop_closures.iter().map(LoopClosure::n_eq).sum()
    }

    fn phi(&self, q: &DVector<f64>) -> DVector<f64> {
        let frames = self.frames(q);
        let mut out = Vec::with_capacity(self.n_e());
        for c in &self.loop_closures {
            let d = self.point(&frames, &c.a) - self.point(&frames, &c.b);
            out.extend([d.x, d.y]);
            if let Some(angle) = c.angle {
                let th = |l: Option<usize>| l.map_or(0.0, |i| frames.theta[i]);
                out.push(th(c.a.link) - th(c.b.link) - angle);
            }
        }
        DVector::from_vec(out)
    }

    fn phi_jac(&self, q: &DVector<f64>) -> DMatrix<f64> {
        let frames = self.frames(q);
        let mut out = DMatrix::zeros(self.n_e(), self.n_q());
        let mut row = 0;
        for c in &self.loop_closures {
            self.add_point_jacobian(&frames, &c.a, 1.0, &mut out, row);
            self.add_point_jacobian(&frames, &c.b, -1.0, &mut out, row);
            if c.angle.is_some() {
                self.add_angular_row(c.a.link, 1.0, &mut out, row + 2);
                self.add_angular_row(c.b.link, -1.0, &mut out, row + 2);
            }
            row += c.n_eq();
        }
        out
    }

    fn phi_hess_action(&self, q: &DVector<f64>, v: &DVector<f64>) -> DMatrix<f64> {
        let frames = self.frames(q);
        let mut out = DMatrix::zeros(self.n_e(), self.n_q());
        let mut row = 0;
        for c in &self.loop_closures {
            self.add_point_hess_action(&frames, &c.a, v, 1.0, &mut out, row);
            self.add_point_hess_action(&frames, &c.b, v, -1.0, &mut out, row);
            // the orientation row is linear in q
            row += c.n_eq();
        }
        out
    }
}

impl MultibodySystem for Linkage {
    fn n_u(&self) -> usize {
        self.actuated.len()
    }

    fn tau_max(&self) -> Vec<f64> {
        self.tau_max.clone()
    }

    fn mass_matrix(&self, q: &DVector<f64>) -> DMatrix<f64> {
        let frames = self.frames(q);
        let n = self.n_q();
        let mut m = DMatrix::zeros(n, n);
        for (i, link) in self.links.iter().enumerate() {
            let p = self.point(&frames, &self.com_point(i));
            for k in self.chain(Some(i)) {
                let ck = self.column(&frames, p, k);
                let wk = (self.joints[k].kind == JointKind::Revolute) as u8 as f64;
                for l in self.chain(Some(i)).filter(|&l| l <= k) {
                    let wl = (self.joints[l].kind == JointKind::Revolute) as u8 as f64;
                    let v = link.mass * ck.dot(&self.column(&frames, p, l)) + link.inertia * wk * wl;
                    m[(k, l)] += v;
                    if l != k {
                        m[(l, k)] += v;
                    }
                }
            }
        }
        m
    }

    fn bias_and_applied_forces(&self, q: &DVector<f64>, qdot: &DVector<f64>, u: &Action) -> DVector<f64> {
        let frames = self.frames(q);
        let (omega, acc) = self.bias_kinematics(&frames, qdot);
        let g = v2(self.gravity);
        let mut force = DVector::zeros(self.n_q());
        for (i, link) in self.links.iter().enumerate() {
            let com = self.com_point(i);
            let p = self.point(&frames, &com);
            let f = (g - self.point_bias_acceleration(&frames, &omega, &acc, &com)) * link.mass;
            for k in self.chain(Some(i)) {
                force[k] += self.column(&frames, p, k).dot(&f);
            }
        }
        for spring in &self.springs {
            match spring {
                Spring::Torsional { joint, stiffness, rest } => {
                    force[*joint] -= stiffness * (q[*joint] - rest);
                }
                Spring::Linear { a, b, stiffness, rest } => {
                    let d = self.point(&frames, a) - self.point(&frames, b);
                    let len = d.norm();
                    if len > 0.0 {
                        let f = d * (-stiffness * (len - rest) / len);
                        let (pa, pb) = (self.point(&frames, a), self.point(&frames, b));
                        for k in self.chain(a.link) {
                            force[k] += self.column(&frames, pa, k).dot(&f);
                        }
                        for k in self.chain(b.link) {
                            force[k] -= self.column(&frames, pb, k).dot(&f);
                        }
                    }
                }
            }
        }
        for (k, &j) in self.actuated.iter().enumerate() {
            force[j] += u.0[k];
        }
        force
    }

    fn total_energy(&self, x: &State) -> f64 {
        let q = x.q().into_owned();
        let qdot = x.qdot().into_owned();
        0.5 * qdot.dot(&(self.mass_matrix(&q) * &qdot)) + self.potential_energy(&q)
    }

    fn segments(&self, q: &DVector<f64>) -> Vec<Segment> {
        let frames = self.frames(q);
        self.links
            .iter()
            .enumerate()
            .map(|(i, link)| {
                let a = frames.origin[i];
                Segment::new(a, a + frames.rot[i] * Vector2::new(link.length, 0.0))
            })
            .collect()
    }
}
