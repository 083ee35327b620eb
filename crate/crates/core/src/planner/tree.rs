use nalgebra::DVector;

use super::simulate::StepRecord;
use crate::atlas::TreeId;
use crate::dynamics::Action;
use crate::manifold::State;

#[derive(Clone, Debug)]
pub struct TreeNode {
    pub state: State,
    pub parent: Option<usize>,
    pub action: Option<Action>,
    /// s, always non-negative
    pub duration: f64,
    pub chart: usize,
    /// Integration steps from the parent, for exact replay.
    pub steps: Vec<StepRecord>,
}

/// Append-only RRT. The goal tree integrates backward in time.
#[derive(Clone, Debug)]
pub struct Tree {
    pub id: TreeId,
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn new(id: TreeId, root: State, chart: usize) -> Self {
        Tree {
            id,
            nodes: vec![TreeNode {
                state: root,
                parent: None,
                action: None,
                duration: 0.0,
                chart,
                steps: Vec::new(),
            }],
        }
    }

    /// +1 for the start tree, −1 for the goal tree.
    pub fn direction(&self) -> f64 {
        match self.id {
            TreeId::Start => 1.0,
            TreeId::Goal => -1.0,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: usize) -> &TreeNode {
        &self.nodes[id]
    }

    /// Euclidean nearest node; ties go to the lowest id.
    pub fn nearest(&self, x: &DVector<f64>) -> usize {
        let mut best = (f64::INFINITY, 0);
        for (i, n) in self.nodes.iter().enumerate() {
            let d = (&n.state.0 - x).norm_squared();
            if d < best.0 {
                best = (d, i);
            }
        }
        best.1
    }

    pub fn contains(&self, x: &State, tol: f64) -> bool {
        self.nodes.iter().any(|n| n.state.distance(x) <= tol)
    }

    pub fn push(&mut self, node: TreeNode) -> usize {
        debug_assert!(node.parent.is_some_and(|p| p < self.nodes.len()));
        self.nodes.push(node);
        self.nodes.len() - 1
    }

    /// Node ids from the root down to `id`.
    pub fn path_from_root(&self, id: usize) -> Vec<usize> {
        let mut path = vec![id];
        let mut cur = id;
        while let Some(p) = self.nodes[cur].parent {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn leaf(state: State, parent: usize) -> TreeNode {
        TreeNode {
            state,
            parent: Some(parent),
            action: Some(Action::zeros(1)),
            duration: 0.1,
            chart: 0,
            steps: Vec::new(),
        }
    }

    #[test]
    fn single_node_tree_returns_root() {
        let t = Tree::new(TreeId::Start, State::new(&[1.0], &[0.0]), 0);
        assert_eq!(t.nearest(&DVector::from_vec(vec![5.0, 5.0])), 0);
    }

    #[test]
    fn nearest_matches_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut t = Tree::new(TreeId::Goal, State::new(&[0.0, 0.0], &[0.0, 0.0]), 0);
        for i in 0..1000 {
            let q: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            t.push(leaf(State::new(&q[..2], &q[2..]), i / 2));
        }
        for _ in 0..100 {
            let x = DVector::from_fn(4, |_, _| rng.random_range(-1.2..1.2));
            let dists: Vec<f64> = t.nodes.iter().map(|n| (&n.state.0 - &x).norm()).collect();
            let oracle = (0..dists.len()).fold(0, |b, i| if dists[i] < dists[b] { i } else { b });
            assert_eq!(t.nearest(&x), oracle);
        }
        let exact = t.nodes[321].state.0.clone();
        assert_eq!(t.nearest(&exact), 321);
    }

    #[test]
    fn path_walks_to_root() {
        let mut t = Tree::new(TreeId::Start, State::new(&[0.0], &[0.0]), 0);
        let a = t.push(leaf(State::new(&[1.0], &[0.0]), 0));
        let b = t.push(leaf(State::new(&[2.0], &[0.0]), a));
        t.push(leaf(State::new(&[3.0], &[0.0]), 0));
        assert_eq!(t.path_from_root(b), vec![0, a, b]);
        assert_eq!(t.path_from_root(0), vec![0]);
        assert!(t.contains(&State::new(&[2.0], &[0.0]), 1e-8));
        assert!(!t.contains(&State::new(&[2.5], &[0.0]), 1e-8));
    }
}
