//! Incrementally grown atlas of tangent-space charts.
//!
//! Each chart parameterizes a patch of the state manifold by orthogonal
//! projection onto the tangent space at its center. The valid parameter set
//! `P_c` of a chart is a ball of radius `ρ_s` intersected with one half-space
//! per neighboring chart,
//!
//! ```text
//! yᵀ y_k − ‖y_k‖² / 2 ≤ 0
//! ```
//!
//! where `y_k` is the neighbor's center in this chart's coordinates. Cuts are
//! only ever added, so `P_c` only shrinks.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::{self, ConstraintSystem, State, TangentBasis};

/// Cuts shorter than this would slice through the chart center and are
/// dropped; they only arise between (nearly) coincident charts.
const MIN_CUT: f64 = 1e-9;

/// Chart-spawn and coordination parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AtlasParams {
    /// Sampling radius `ρ_s` of every chart ball.
    pub rho_s: f64,
    /// Spawn radius `ρ < ρ_s`.
    pub rho: f64,
    /// Maximum distance between manifold and tangent space.
    pub epsilon: f64,
    /// Minimum `‖Δy‖ / ‖Δx‖` ratio.
    pub cos_alpha: f64,
}

impl AtlasParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho < self.rho_s) {
            return Err(Error::invalid("params.rho must satisfy 0 < rho < rho_s"));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::invalid("params.epsilon must be positive"));
        }
        if !(self.cos_alpha > 0.0 && self.cos_alpha < 1.0) {
            return Err(Error::invalid("params.cos_alpha must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Half-space bounding a chart against a neighbor.
#[derive(Clone, Debug, PartialEq)]
pub struct Cut {
    pub y: DVector<f64>,
    pub neighbor: usize,
}

impl Cut {
    /// Positive when `y` lies on the neighbor's side.
    pub fn violation(&self, y: &DVector<f64>) -> f64 {
        y.dot(&self.y) - 0.5 * self.y.norm_squared()
    }
}

#[derive(Clone, Debug)]
pub struct Chart {
    pub id: usize,
    pub center: State,
    pub basis: TangentBasis,
    pub radius: f64,
    pub cuts: Vec<Cut>,
}

impl Chart {
    pub fn new<C: ConstraintSystem + ?Sized>(cs: &C, id: usize, center: State, radius: f64) -> Result<Self> {
        let basis = manifold::tangent_basis(cs, &center)?;
        Ok(Chart {
            id,
            center,
            basis,
            radius,
            cuts: Vec::new(),
        })
    }

    pub fn coords(&self, x: &State) -> DVector<f64> {
        manifold::chart_coords(&self.center, &self.basis, x)
    }

    /// Point `x_c + U y` on the tangent space.
    pub fn tangent_point(&self, y: &DVector<f64>) -> DVector<f64> {
        &self.center.0 + self.basis.matrix() * y
    }

    pub fn lift<C: ConstraintSystem + ?Sized>(&self, cs: &C, y: &DVector<f64>) -> Result<State> {
        manifold::chart_lift(cs, &self.center, &self.basis, y)
    }

    pub fn in_polytope(&self, y: &DVector<f64>) -> bool {
        y.norm() <= self.radius && self.cuts.iter().all(|c| c.violation(y) <= 0.0)
    }

    pub fn neighbors(&self) -> Vec<usize> {
        self.cuts.iter().map(|c| c.neighbor).collect()
    }
}

/// Chart-spawn test: tangent-space distance, curvature ratio and radius.
pub fn needs_new_chart(
    chart: &Chart,
    params: &AtlasParams,
    x_prev: &State,
    x_next: &State,
    y_prev: &DVector<f64>,
    y_next: &DVector<f64>,
) -> bool {
    let off_tangent = (&x_next.0 - chart.tangent_point(y_next)).norm();
    if off_tangent > params.epsilon {
        return true;
    }
    let dx = x_next.distance(x_prev);
    if dx > 0.0 && (y_next - y_prev).norm() / dx < params.cos_alpha {
        return true;
    }
    y_next.norm() > params.rho
}

/// Which tree a chart occupancy count refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeId {
    Start = 0,
    Goal = 1,
}

impl TreeId {
    pub fn other(self) -> Self {
        match self {
            TreeId::Start => TreeId::Goal,
            TreeId::Goal => TreeId::Start,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Debug)]
pub struct Atlas {
    pub params: AtlasParams,
    charts: Vec<Chart>,
    occupancy: Vec<[usize; 2]>,
}

impl Atlas {
    pub fn new(params: AtlasParams) -> Self {
        Atlas {
            params,
            charts: Vec::new(),
            occupancy: Vec::new(),
        }
    }

    /// Two charts at the query states, ids 0 and 1.
    pub fn init<C: ConstraintSystem + ?Sized>(cs: &C, params: AtlasParams, start: &State, goal: &State) -> Result<Self> {
        let mut atlas = Atlas::new(params);
        atlas.add_chart(cs, start, None)?;
        atlas.add_chart(cs, goal, None)?;
        Ok(atlas)
    }

    pub fn len(&self) -> usize {
        self.charts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.charts.is_empty()
    }

    pub fn chart(&self, id: usize) -> &Chart {
        &self.charts[id]
    }

    pub fn charts(&self) -> &[Chart] {
        &self.charts
    }

    pub fn add_chart<C: ConstraintSystem + ?Sized>(&mut self, cs: &C, x: &State, parent: Option<usize>) -> Result<usize> {
        let mut overlay = AtlasOverlay::new(self);
        let id = overlay.add_chart(cs, x, parent)?;
        let changes = overlay.into_changes();
        self.commit(changes);
        Ok(id)
    }

    /// Applies the charts and cuts recorded by an overlay over this atlas.
    pub fn commit(&mut self, changes: AtlasChanges) {
        assert_eq!(changes.base_len, self.charts.len(), "stale atlas overlay");
        for (id, cut) in changes.cuts {
            self.charts[id].cuts.push(cut);
        }
        for chart in changes.charts {
            self.charts.push(chart);
            self.occupancy.push([0, 0]);
        }
    }

    pub fn note_node(&mut self, chart: usize, tree: TreeId) {
        self.occupancy[chart][tree.index()] += 1;
    }

    pub fn occupancy(&self, chart: usize, tree: TreeId) -> usize {
        self.occupancy[chart][tree.index()]
    }

    pub fn in_polytope(&self, chart: usize, y: &DVector<f64>) -> bool {
        self.charts[chart].in_polytope(y)
    }

    pub fn neighbor_chart(&self, chart: usize, y: &DVector<f64>) -> Result<usize> {
        most_violated(chart, self.charts[chart].cuts.iter(), y)
    }

    /// Random ambient point on the tangent space of a chart holding nodes of
    /// `tree`. Returns the point and the chart it was drawn from.
    pub fn sample<R: Rng + ?Sized>(&self, tree: TreeId, rng: &mut R) -> (DVector<f64>, usize) {
        let owned: Vec<usize> = (0..self.charts.len())
            .filter(|&c| self.occupancy[c][tree.index()] > 0)
            .collect();
        assert!(!owned.is_empty(), "sampling an atlas with no charts for {tree:?}");
        loop {
            let r = owned[rng.random_range(0..owned.len())];
            let chart = &self.charts[r];
            let y = random_in_ball(rng, chart.basis.dim(), chart.radius);
            if chart.in_polytope(&y) {
                return (chart.tangent_point(&y), r);
            }
        }
    }

    pub fn dump(&self) -> AtlasDump {
        AtlasDump {
            charts: self
                .charts
                .iter()
                .map(|c| {
                    let u = c.basis.matrix();
                    ChartDump {
                        id: c.id,
                        center: c.center.0.iter().copied().collect(),
                        basis_rows: u.nrows(),
                        basis_cols: u.ncols(),
                        basis: u.transpose().iter().copied().collect(),
                        radius: c.radius,
                        cuts: c.cuts.iter().map(|k| k.y.iter().copied().collect()).collect(),
                        neighbors: c.neighbors(),
                    }
                })
                .collect(),
        }
    }
}

/// Uniform sample in the `dim`-ball of `radius`: normalized Gaussian
/// direction, radius scaled by `U^(1/dim)`.
pub fn random_in_ball<R: Rng + ?Sized>(rng: &mut R, dim: usize, radius: f64) -> DVector<f64> {
    loop {
        let dir = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let n = dir.norm();
        if n > 1e-12 {
            let r = radius * rng.random::<f64>().powf(1.0 / dim as f64);
            return dir * (r / n);
        }
    }
}

fn most_violated<'a>(chart: usize, cuts: impl Iterator<Item = &'a Cut>, y: &DVector<f64>) -> Result<usize> {
    let mut best: Option<(f64, usize)> = None;
    for cut in cuts {
        let v = cut.violation(y);
        if v <= 0.0 {
            continue;
        }
        best = match best {
            Some((bv, bn)) if bv > v || (bv == v && bn < cut.neighbor) => Some((bv, bn)),
            _ => Some((v, cut.neighbor)),
        };
    }
    best.map(|(_, n)| n).ok_or(Error::NoNeighbor { chart })
}

/// Charts and cuts created on top of a read-only atlas, pending commit.
#[derive(Debug)]
pub struct AtlasChanges {
    base_len: usize,
    charts: Vec<Chart>,
    cuts: Vec<(usize, Cut)>,
}

impl AtlasChanges {
    pub fn new_charts(&self) -> usize {
        self.charts.len()
    }
}

/// Copy-on-write view of an atlas. Chart ids allocated here continue the
/// base numbering, so committing exactly one overlay keeps them valid.
pub struct AtlasOverlay<'a> {
    base: &'a Atlas,
    charts: Vec<Chart>,
    cuts: Vec<(usize, Cut)>,
}

impl<'a> AtlasOverlay<'a> {
    pub fn new(base: &'a Atlas) -> Self {
        AtlasOverlay {
            base,
            charts: Vec::new(),
            cuts: Vec::new(),
        }
    }

    pub fn params(&self) -> &AtlasParams {
        &self.base.params
    }

    pub fn len(&self) -> usize {
        self.base.len() + self.charts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn chart(&self, id: usize) -> &Chart {
        let n = self.base.len();
        if id < n {
            self.base.chart(id)
        } else {
            &self.charts[id - n]
        }
    }

    fn cuts_of(&self, id: usize) -> impl Iterator<Item = &Cut> {
        let extra = self.cuts.iter().filter(move |(c, _)| *c == id).map(|(_, k)| k);
        self.chart(id).cuts.iter().chain(extra)
    }

    pub fn in_polytope(&self, id: usize, y: &DVector<f64>) -> bool {
        y.norm() <= self.chart(id).radius && self.cuts_of(id).all(|c| c.violation(y) <= 0.0)
    }

    pub fn neighbor_chart(&self, id: usize, y: &DVector<f64>) -> Result<usize> {
        most_violated(id, self.cuts_of(id), y)
    }

    /// New chart at `x`. Mutual cuts are installed with the spawning chart
    /// and with every chart whose center lies within `ρ_s` of `x` and
    /// projects inside the new chart's ball, and vice versa.
    pub fn add_chart<C: ConstraintSystem + ?Sized>(&mut self, cs: &C, x: &State, parent: Option<usize>) -> Result<usize> {
        let id = self.len();
        let rho_s = self.base.params.rho_s;
        let mut chart = Chart::new(cs, id, x.clone(), rho_s)?;
        let mut new_cuts = Vec::new();
        for other in 0..id {
            let existing = self.chart(other);
            let y_new = existing.coords(x);
            let y_old = chart.coords(&existing.center);
            let close = y_new.norm() <= rho_s && y_old.norm() <= rho_s && x.distance(&existing.center) <= rho_s;
            if !(close || parent == Some(other)) {
                continue;
            }
            if y_new.norm() > MIN_CUT {
                new_cuts.push((other, Cut { y: y_new, neighbor: id }));
            }
            if y_old.norm() > MIN_CUT {
                chart.cuts.push(Cut { y: y_old, neighbor: other });
            }
        }
        let n = self.base.len();
        for (other, cut) in new_cuts {
            if other < n {
                self.cuts.push((other, cut));
            } else {
                self.charts[other - n].cuts.push(cut);
            }
        }
        self.charts.push(chart);
        Ok(id)
    }

    pub fn into_changes(self) -> AtlasChanges {
        AtlasChanges {
            base_len: self.base.len(),
            charts: self.charts,
            cuts: self.cuts,
        }
    }
}

/// Serializable snapshot of an atlas for offline inspection.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AtlasDump {
    pub charts: Vec<ChartDump>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChartDump {
    pub id: usize,
    pub center: Vec<f64>,
    pub basis_rows: usize,
    pub basis_cols: usize,
    /// Row-major.
    pub basis: Vec<f64>,
    pub radius: f64,
    pub cuts: Vec<Vec<f64>>,
    pub neighbors: Vec<usize>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{AffineConstraint, Sphere};
    use nalgebra::DMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(rho_s: f64) -> AtlasParams {
        AtlasParams {
            rho_s,
            rho: rho_s / 2.0,
            epsilon: 0.1,
            cos_alpha: 0.1,
        }
    }

    /// `q_2 = 0` in R²: the state manifold is the plane (q_1, q̇_1).
    fn line() -> AffineConstraint {
        AffineConstraint {
            a: DMatrix::from_row_slice(1, 2, &[0.0, 1.0]),
            b: DVector::zeros(1),
        }
    }

    fn on_line(p: f64, v: f64) -> State {
        State::new(&[p, 0.0], &[v, 0.0])
    }

    fn bare_chart(dim: usize, radius: f64) -> Chart {
        Chart {
            id: 0,
            center: State(DVector::zeros(2 * dim)),
            basis: TangentBasis(DMatrix::identity(2 * dim, dim)),
            radius,
            cuts: Vec::new(),
        }
    }

    #[test]
    fn membership_with_cut() {
        let mut c = bare_chart(1, 1.0);
        c.cuts.push(Cut {
            y: DVector::from_vec(vec![1.0, 0.0]),
            neighbor: 1,
        });
        assert!(c.in_polytope(&DVector::zeros(2)));
        assert!(!c.in_polytope(&DVector::from_vec(vec![0.6, 0.0])));
        assert!(c.in_polytope(&DVector::from_vec(vec![0.4, 0.0])));
        assert!(!c.in_polytope(&DVector::from_vec(vec![0.0, -1.01])));
        // midpoint is on the boundary
        assert_eq!(c.cuts[0].violation(&DVector::from_vec(vec![0.5, 0.0])), 0.0);
    }

    #[test]
    fn neighbor_selection() {
        let mut atlas = Atlas::new(params(1.0));
        let mut c = bare_chart(1, 1.0);
        c.cuts.push(Cut {
            y: DVector::from_vec(vec![1.0, 0.0]),
            neighbor: 3,
        });
        c.cuts.push(Cut {
            y: DVector::from_vec(vec![0.0, 1.0]),
            neighbor: 2,
        });
        atlas.charts.push(c);
        atlas.occupancy.push([0, 0]);
        let y = DVector::from_vec(vec![0.7, 0.1]);
        assert_eq!(atlas.neighbor_chart(0, &y).unwrap(), 3);
        // equal violation: lowest neighbor id wins
        let tie = DVector::from_vec(vec![0.8, 0.8]);
        assert_eq!(atlas.neighbor_chart(0, &tie).unwrap(), 2);
        let outside = DVector::from_vec(vec![-1.5, 0.0]);
        assert!(matches!(atlas.neighbor_chart(0, &outside), Err(Error::NoNeighbor { chart: 0 })));
    }

    #[test]
    fn init_creates_two_charts() {
        let cs = line();
        let atlas = Atlas::init(&cs, params(1.0), &on_line(0.0, 0.0), &on_line(0.5, 0.0)).unwrap();
        assert_eq!(atlas.len(), 2);
        assert_eq!(atlas.chart(0).id, 0);
        assert_eq!(atlas.chart(1).id, 1);
        // centers project inside each other's ball, so both are cut
        assert_eq!(atlas.chart(0).cuts.len(), 1);
        assert_eq!(atlas.chart(1).cuts.len(), 1);

        let same = Atlas::init(&cs, params(1.0), &on_line(0.0, 0.0), &on_line(0.0, 0.0)).unwrap();
        assert_eq!(same.len(), 2);
        assert!(same.chart(0).cuts.is_empty());
    }

    #[test]
    fn antipodal_sphere_charts_are_not_cut() {
        let cs = Sphere { dim: 3 };
        let north = State::new(&[0.0, 0.0, 1.0], &[0.0; 3]);
        let south = State::new(&[0.0, 0.0, -1.0], &[0.0; 3]);
        let atlas = Atlas::init(&cs, params(2.0), &north, &south).unwrap();
        assert!(atlas.chart(0).cuts.is_empty() && atlas.chart(1).cuts.is_empty());
    }

    #[test]
    fn spawned_chart_is_coordinated_with_parent() {
        let cs = line();
        let mut atlas = Atlas::new(params(2.0));
        atlas.add_chart(&cs, &on_line(0.0, 0.0), None).unwrap();
        let x = on_line(1.0, 0.0);
        let k = atlas.add_chart(&cs, &x, Some(0)).unwrap();
        let y_k = atlas.chart(0).coords(&x);
        assert_eq!(atlas.chart(0).cuts.len(), 1);
        assert_eq!(atlas.chart(0).cuts[0].neighbor, k);
        assert_eq!(atlas.chart(k).cuts[0].neighbor, 0);
        // midpoint on the boundary of both, centers still inside
        let mid = &y_k * 0.5;
        assert!(atlas.chart(0).cuts[0].violation(&mid).abs() < 1e-12);
        assert!(atlas.in_polytope(0, &DVector::zeros(2)));
        assert!(atlas.in_polytope(k, &DVector::zeros(2)));
    }

    #[test]
    fn collinear_chain_middle_has_two_cuts() {
        let cs = line();
        let rho = 1.0;
        let mut atlas = Atlas::new(params(1.5 * rho));
        atlas.add_chart(&cs, &on_line(0.0, 0.0), None).unwrap();
        atlas.add_chart(&cs, &on_line(rho, 0.0), Some(0)).unwrap();
        atlas.add_chart(&cs, &on_line(2.0 * rho, 0.0), Some(1)).unwrap();
        assert_eq!(atlas.chart(1).cuts.len(), 2);
        assert_eq!(atlas.chart(0).cuts.len(), 1);
        assert_eq!(atlas.chart(2).cuts.len(), 1);
    }

    #[test]
    fn flat_spawn_test_fires_only_on_radius() {
        let cs = line();
        let p = params(1.0);
        let chart = Chart::new(&cs, 0, on_line(0.0, 0.0), p.rho_s).unwrap();
        let mut prev = on_line(0.0, 0.0);
        for i in 1..=100 {
            let next = on_line(0.01 * i as f64, 0.003 * i as f64);
            let fires = needs_new_chart(&chart, &p, &prev, &next, &chart.coords(&prev), &chart.coords(&next));
            assert_eq!(fires, chart.coords(&next).norm() > p.rho, "step {i}");
            prev = next;
        }
    }

    #[test]
    fn orthogonal_motion_fires_curvature_test() {
        let chart = bare_chart(1, 1.0);
        let p = params(1.0);
        let prev = State(DVector::from_vec(vec![0.0, 0.0]));
        // basis spans coordinate 0 only in this one-column setup
        let chart = Chart {
            basis: TangentBasis(DMatrix::from_column_slice(2, 1, &[1.0, 0.0])),
            ..chart
        };
        let next = State(DVector::from_vec(vec![0.0, 0.05]));
        let y = chart.coords(&prev);
        assert!(needs_new_chart(&chart, &p, &prev, &next, &y, &y.clone()));
    }

    #[test]
    fn sampling_only_uses_owned_charts() {
        let cs = line();
        let mut atlas = Atlas::init(&cs, params(1.0), &on_line(0.0, 0.0), &on_line(5.0, 0.0)).unwrap();
        atlas.note_node(0, TreeId::Start);
        atlas.note_node(1, TreeId::Goal);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let (_, r) = atlas.sample(TreeId::Start, &mut rng);
            assert_eq!(r, 0);
            let (_, r) = atlas.sample(TreeId::Goal, &mut rng);
            assert_eq!(r, 1);
        }
    }

    #[test]
    fn overlay_commit_matches_direct_insertion() {
        let cs = line();
        let mut direct = Atlas::new(params(2.0));
        direct.add_chart(&cs, &on_line(0.0, 0.0), None).unwrap();
        let mut staged = direct.clone();

        direct.add_chart(&cs, &on_line(1.0, 0.2), Some(0)).unwrap();
        direct.add_chart(&cs, &on_line(1.8, 0.0), Some(1)).unwrap();

        let mut overlay = AtlasOverlay::new(&staged);
        let a = overlay.add_chart(&cs, &on_line(1.0, 0.2), Some(0)).unwrap();
        overlay.add_chart(&cs, &on_line(1.8, 0.0), Some(a)).unwrap();
        let changes = overlay.into_changes();
        staged.commit(changes);

        assert_eq!(direct.len(), staged.len());
        for (d, s) in direct.charts().iter().zip(staged.charts()) {
            assert_eq!(d.cuts, s.cuts);
            assert_eq!(d.center, s.center);
        }
    }

    #[test]
    fn dump_lists_every_chart() {
        let cs = line();
        let atlas = Atlas::init(&cs, params(1.0), &on_line(0.0, 0.0), &on_line(0.5, 0.0)).unwrap();
        let dump = atlas.dump();
        assert_eq!(dump.charts.len(), 2);
        assert_eq!(dump.charts[0].basis.len(), 4 * 2);
        assert_eq!(dump.charts[0].neighbors, vec![1]);
        let text = serde_json::to_string(&dump).unwrap();
        let back: AtlasDump = serde_json::from_str(&text).unwrap();
        assert_eq!(back.charts[1].cuts, dump.charts[1].cuts);
    }
}
