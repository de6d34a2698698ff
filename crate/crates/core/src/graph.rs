//! Undirected communication graphs and their Metropolis mixing weights.

use std::collections::{BTreeSet, VecDeque};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Connectivity retries for Erdős–Rényi sampling.
pub const ER_MAX_RETRIES: usize = 100;

/// Tolerance on row/column sums of a doubly stochastic matrix.
pub const STOCHASTIC_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum GraphKind {
    Cycle,
    Path,
    Star,
    Complete,
    ErdosRenyi { p: f64, seed: u64 },
}

/// Undirected simple graph on nodes `0..node_count`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    node_count: usize,
    edges: BTreeSet<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
}

impl Graph {
    /// Builds a graph from an edge list. Edges are unordered; duplicates are merged.
    pub fn from_edges(node_count: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if node_count == 0 {
            return Err(Error::Argument("graph needs at least one node".into()));
        }
        let mut set = BTreeSet::new();
        for &(a, b) in edges {
            if a >= node_count || b >= node_count {
                return Err(Error::Argument(format!(
                    "edge ({a},{b}) out of range for {node_count} nodes"
                )));
            }
            if a == b {
                return Err(Error::Argument(format!("self-loop at node {a}")));
            }
            set.insert((a.min(b), a.max(b)));
        }
        let mut neighbors = vec![Vec::new(); node_count];
        for &(a, b) in &set {
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        Ok(Self {
            node_count,
            edges: set,
            neighbors,
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    /// Edges as `(i, j)` with `i < j`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.contains(&(i.min(j), i.max(j)))
    }

    /// BFS hop distances from `source`; `None` for unreachable nodes.
    pub fn bfs_distances(&self, source: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.node_count];
        let mut queue = VecDeque::new();
        dist[source] = Some(0);
        queue.push_back(source);
        while let Some(v) = queue.pop_front() {
            let d = dist[v].unwrap();
            for &w in &self.neighbors[v] {
                if dist[w].is_none() {
                    dist[w] = Some(d + 1);
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    pub fn is_connected(&self) -> bool {
        self.bfs_distances(0).iter().all(Option::is_some)
    }

    /// Longest shortest-path length over all node pairs.
    pub fn diameter(&self) -> Result<usize> {
        let mut diam = 0;
        for s in 0..self.node_count {
            for d in self.bfs_distances(s) {
                diam = diam.max(d.ok_or(Error::Disconnected)?);
            }
        }
        Ok(diam)
    }
}

pub fn is_connected(g: &Graph) -> bool {
    g.is_connected()
}

pub fn diameter(g: &Graph) -> Result<usize> {
    g.diameter()
}

/// Builds a connected graph of the given family.
pub fn make_graph(kind: GraphKind, n: usize) -> Result<Graph> {
    if n < 2 {
        return Err(Error::Argument(format!("need at least 2 nodes, got {n}")));
    }
    let edges: Vec<(usize, usize)> = match kind {
        GraphKind::Cycle => {
            if n == 2 {
                vec![(0, 1)]
            } else {
                (0..n).map(|i| (i, (i + 1) % n)).collect()
            }
        }
        GraphKind::Path => (0..n - 1).map(|i| (i, i + 1)).collect(),
        GraphKind::Star => (1..n).map(|i| (0, i)).collect(),
        GraphKind::Complete => (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .collect(),
        GraphKind::ErdosRenyi { p, seed } => {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Argument(format!("edge probability {p} not in [0,1]")));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..ER_MAX_RETRIES {
                let mut edges = Vec::new();
                for i in 0..n {
                    for j in i + 1..n {
                        if rng.random::<f64>() < p {
                            edges.push((i, j));
                        }
                    }
                }
                let g = Graph::from_edges(n, &edges)?;
                if g.is_connected() {
                    return Ok(g);
                }
            }
            return Err(Error::Construction(format!(
                "Erdős–Rényi G({n}, {p}) disconnected after {ER_MAX_RETRIES} draws"
            )));
        }
    };
    let g = Graph::from_edges(n, &edges)?;
    if !g.is_connected() {
        return Err(Error::Construction("generated graph is disconnected".into()));
    }
    Ok(g)
}

/// Symmetric doubly stochastic mixing matrix supported on the graph.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix(DMatrix<f64>);

impl WeightMatrix {
    /// Wraps a raw matrix without checking invariants; see [`WeightMatrix::check`].
    pub fn from_matrix(m: DMatrix<f64>) -> Self {
        Self(m)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    /// Checks square shape, symmetry, nonnegativity and unit row/column sums.
    pub fn check_stochastic(&self) -> Result<()> {
        let w = &self.0;
        let n = w.nrows();
        if w.ncols() != n {
            return Err(Error::Argument("weight matrix not square".into()));
        }
        for i in 0..n {
            let row: f64 = w.row(i).sum();
            let col: f64 = w.column(i).sum();
            if (row - 1.0).abs() > STOCHASTIC_TOL || (col - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::Argument(format!(
                    "row/column {i} sums to {row}/{col}, not 1"
                )));
            }
            for j in 0..n {
                if w[(i, j)] < 0.0 {
                    return Err(Error::Argument(format!("negative weight at ({i},{j})")));
                }
                if (w[(i, j)] - w[(j, i)]).abs() > STOCHASTIC_TOL {
                    return Err(Error::Argument(format!("asymmetric at ({i},{j})")));
                }
            }
        }
        Ok(())
    }

    /// Stochasticity plus zero pattern outside the graph's edges.
    pub fn check(&self, g: &Graph) -> Result<()> {
        self.check_stochastic()?;
        if self.dim() != g.node_count() {
            return Err(Error::Argument("weight matrix / graph size mismatch".into()));
        }
        for i in 0..self.dim() {
            for j in 0..self.dim() {
                if i != j && !g.has_edge(i, j) && self.0[(i, j)] != 0.0 {
                    return Err(Error::Argument(format!("weight on non-edge ({i},{j})")));
                }
            }
        }
        Ok(())
    }

    /// Largest eigenvalue modulus after removing the eigenvalue 1 of the all-ones vector.
    pub fn second_largest_modulus(&self) -> f64 {
        let mut ev: Vec<f64> = self
            .0
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .collect();
        ev.sort_by(|a, b| b.partial_cmp(a).unwrap());
        ev.iter()
            .skip(1)
            .fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }
}

/// Metropolis–Hastings weights: `1/(1+max(deg i, deg j))` on edges, remainder on the diagonal.
pub fn metropolis_weights(g: &Graph) -> WeightMatrix {
    let n = g.node_count();
    let mut w = DMatrix::zeros(n, n);
    for (i, j) in g.edges() {
        let v = 1.0 / (1.0 + g.degree(i).max(g.degree(j)) as f64);
        w[(i, j)] = v;
        w[(j, i)] = v;
    }
    for i in 0..n {
        let off: f64 = g.neighbors(i).iter().map(|&j| w[(i, j)]).sum();
        w[(i, i)] = 1.0 - off;
    }
    WeightMatrix(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cycle_ten_is_two_regular() {
        let g = make_graph(GraphKind::Cycle, 10).unwrap();
        assert_eq!(g.edge_count(), 10);
        assert!((0..10).all(|i| g.degree(i) == 2));
    }

    #[test]
    fn complete_and_path_edge_sets() {
        assert_eq!(make_graph(GraphKind::Complete, 4).unwrap().edge_count(), 6);
        let p = make_graph(GraphKind::Path, 3).unwrap();
        assert_eq!(p.edges().collect::<Vec<_>>(), vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn rejects_single_node_and_bad_edges() {
        assert!(matches!(make_graph(GraphKind::Cycle, 1), Err(Error::Argument(_))));
        assert!(Graph::from_edges(3, &[(0, 0)]).is_err());
        assert!(Graph::from_edges(3, &[(0, 5)]).is_err());
    }

    #[test]
    fn diameters() {
        assert_eq!(make_graph(GraphKind::Cycle, 10).unwrap().diameter().unwrap(), 5);
        assert_eq!(make_graph(GraphKind::Complete, 4).unwrap().diameter().unwrap(), 1);
        assert_eq!(make_graph(GraphKind::Path, 3).unwrap().diameter().unwrap(), 2);
        for n in 3..20 {
            let g = make_graph(GraphKind::Cycle, n).unwrap();
            assert_eq!(g.diameter().unwrap(), n / 2);
        }
    }

    #[test]
    fn connectivity() {
        assert!(make_graph(GraphKind::Cycle, 10).unwrap().is_connected());
        let split = Graph::from_edges(4, &[(0, 1), (2, 3)]).unwrap();
        assert!(!split.is_connected());
        assert!(matches!(split.diameter(), Err(Error::Disconnected)));
        assert!(Graph::from_edges(1, &[]).unwrap().is_connected());
    }

    #[test]
    fn erdos_renyi_is_deterministic_and_connected() {
        let kind = GraphKind::ErdosRenyi { p: 0.3, seed: 11 };
        let a = make_graph(kind, 12).unwrap();
        let b = make_graph(kind, 12).unwrap();
        assert_eq!(a, b);
        assert!(a.is_connected());
        let hopeless = GraphKind::ErdosRenyi { p: 0.0, seed: 1 };
        assert!(matches!(make_graph(hopeless, 5), Err(Error::Construction(_))));
    }

    #[test]
    fn metropolis_on_cycle_is_uniform_thirds() {
        let w = metropolis_weights(&make_graph(GraphKind::Cycle, 10).unwrap());
        for i in 0..10 {
            assert!((w.matrix()[(i, i)] - 1.0 / 3.0).abs() < 1e-15);
            assert!((w.matrix()[(i, (i + 1) % 10)] - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn metropolis_on_star() {
        let g = make_graph(GraphKind::Star, 3).unwrap();
        let w = metropolis_weights(&g);
        let m = w.matrix();
        for (i, j, v) in [(0, 1, 1.0 / 3.0), (0, 2, 1.0 / 3.0), (0, 0, 1.0 / 3.0), (1, 1, 2.0 / 3.0), (2, 2, 2.0 / 3.0), (1, 2, 0.0)] {
            assert!((m[(i, j)] - v).abs() < 1e-15, "({i},{j})");
        }
        w.check(&g).unwrap();
    }

    #[test]
    fn contraction_on_connected_graphs() {
        for kind in [GraphKind::Cycle, GraphKind::Path, GraphKind::Star, GraphKind::Complete] {
            for n in 2..12 {
                let g = make_graph(kind, n).unwrap();
                let w = metropolis_weights(&g);
                w.check(&g).unwrap();
                assert!(w.second_largest_modulus() < 1.0 - 1e-9, "{kind:?} {n}");
            }
        }
    }
}
