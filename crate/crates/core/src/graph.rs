//! Grid topology and the two consensus weight matrices built from it.
//!
//! Nodes are indexed `0..n` throughout the library. File formats and the
//! CLI use 1-based node ids and translate at the boundary.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TopologyError {
    #[error("graph must have at least one node")]
    Empty,
    #[error("edge ({a}, {b}) references a node outside 0..{n}")]
    OutOfRange { a: usize, b: usize, n: usize },
    #[error("self-loop on node {0}")]
    SelfLoop(usize),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),
    #[error("graph is disconnected: node {unreachable} is not reachable from node 0")]
    Disconnected { unreachable: usize },
}

/// Undirected connected graph of power nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridTopology {
    n: usize,
    /// Each edge once, normalized to `(lo, hi)`, in insertion order.
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
}

impl GridTopology {
    /// Validates `edges` over `n` nodes and derives neighbor lists.
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Result<Self, TopologyError> {
        if n == 0 {
            return Err(TopologyError::Empty);
        }
        let mut neighbors = vec![Vec::new(); n];
        let mut normalized = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(TopologyError::OutOfRange { a, b, n });
            }
            if a == b {
                return Err(TopologyError::SelfLoop(a));
            }
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            if neighbors[lo].contains(&hi) {
                return Err(TopologyError::DuplicateEdge(a, b));
            }
            neighbors[lo].push(hi);
            neighbors[hi].push(lo);
            normalized.push((lo, hi));
        }

        // BFS from node 0.
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(i) = queue.pop_front() {
            for &j in &neighbors[i] {
                if !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        if let Some(unreachable) = seen.iter().position(|s| !s) {
            return Err(TopologyError::Disconnected { unreachable });
        }

        Ok(Self {
            n,
            edges: normalized,
            neighbors,
        })
    }

    /// Ring `0-1-...-(n-1)-0` plus a chord from node 0 to node `n/2`.
    ///
    /// Used as the default 6-node layout. Degenerates to a path for `n < 3`
    /// and to a plain ring when the chord would duplicate a ring edge.
    pub fn ring_with_chord(n: usize) -> Result<Self, TopologyError> {
        let mut edges: Vec<(usize, usize)> = (0..n.saturating_sub(1)).map(|i| (i, i + 1)).collect();
        if n >= 3 {
            edges.push((n - 1, 0));
        }
        let mid = n / 2;
        if n >= 4 && mid != 1 && mid != n - 1 {
            edges.push((0, mid));
        }
        Self::new(n, &edges)
    }

    pub fn path(n: usize) -> Result<Self, TopologyError> {
        let edges: Vec<(usize, usize)> = (0..n.saturating_sub(1)).map(|i| (i, i + 1)).collect();
        Self::new(n, &edges)
    }

    pub fn complete(n: usize) -> Result<Self, TopologyError> {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                edges.push((i, j));
            }
        }
        Self::new(n, &edges)
    }

    #[inline]
    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    #[inline]
    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.neighbors.iter().map(Vec::len).collect()
    }

    pub fn is_edge(&self, i: usize, j: usize) -> bool {
        i < self.n && self.neighbors[i].contains(&j)
    }

    /// True when the graph has exactly `n - 1` edges (it is connected by construction).
    pub fn is_tree(&self) -> bool {
        self.edges.len() + 1 == self.n
    }
}

/// Dense row-major `n x n` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    n: usize,
    data: Vec<f64>,
}

impl WeightMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Option<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return None;
        }
        Some(Self {
            n,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    /// `out = W x`.
    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.row(i).iter().zip(x).map(|(w, v)| w * v).sum();
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.apply_into(x, &mut out);
        out
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).iter().sum()).collect()
    }

    pub fn column_sums(&self) -> Vec<f64> {
        (0..self.n)
            .map(|j| (0..self.n).map(|i| self.get(i, j)).sum())
            .collect()
    }

    pub fn is_nonnegative(&self) -> bool {
        self.data.iter().all(|&w| w >= 0.0)
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }
}

/// Column-stochastic weights `q_ij = 1 / (1 + |N_j|)` for `j` in `N_i ∪ {i}`.
///
/// Each node splits its value equally among itself and its neighbors, so
/// one multiplication preserves the sum of all node values. Rows do not in
/// general sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct QMatrix(WeightMatrix);

impl QMatrix {
    pub fn new(topo: &GridTopology) -> Self {
        let n = topo.node_count();
        let mut m = WeightMatrix::zeros(n);
        for j in 0..n {
            let w = 1.0 / (1.0 + topo.degree(j) as f64);
            m.set(j, j, w);
            for &i in topo.neighbors(j) {
                m.set(i, j, w);
            }
        }
        Self(m)
    }

    pub fn as_matrix(&self) -> &WeightMatrix {
        &self.0
    }
}

/// Symmetric doubly stochastic Metropolis-Hastings weights.
///
/// `a_ij = 1 / (1 + max(|N_i|, |N_j|))` on edges; the diagonal takes the
/// remainder of each row.
#[derive(Debug, Clone, PartialEq)]
pub struct MetropolisMatrix(WeightMatrix);

impl MetropolisMatrix {
    pub fn new(topo: &GridTopology) -> Self {
        let n = topo.node_count();
        let mut m = WeightMatrix::zeros(n);
        for &(i, j) in topo.edges() {
            let w = metropolis_weight(topo.degree(i), topo.degree(j));
            m.set(i, j, w);
            m.set(j, i, w);
        }
        for i in 0..n {
            let off: f64 = topo.neighbors(i).iter().map(|&j| m.get(i, j)).sum();
            m.set(i, i, 1.0 - off);
        }
        Self(m)
    }

    pub fn as_matrix(&self) -> &WeightMatrix {
        &self.0
    }

    /// Edge weight `a_ij`; zero off the edge set.
    #[inline]
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        if i == j {
            0.0
        } else {
            self.0.get(i, j)
        }
    }
}

#[inline]
pub fn metropolis_weight(deg_i: usize, deg_j: usize) -> f64 {
    1.0 / (1.0 + deg_i.max(deg_j) as f64)
}

pub fn build_q_matrix(topo: &GridTopology) -> QMatrix {
    QMatrix::new(topo)
}

pub fn build_s_matrix(topo: &GridTopology) -> MetropolisMatrix {
    MetropolisMatrix::new(topo)
}
