//! Undirected communication graphs and the matrix algebra built on them:
//! incidence, Laplacian, centering and Moore-Penrose inverses.
//!
//! Every undirected link `{i, j}` is expanded into the two directed edges
//! `i -> j` and `j -> i`. Directed edges are labeled in order of
//! `(destination, source)`, so the columns of the incidence matrix are
//! grouped by the node they enter.

use std::collections::BTreeSet;
use std::fmt;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative eigenvalue cutoff used by [`pseudo_inverse`] unless the caller
/// asks for something else.
pub const DEFAULT_PINV_TOL: f64 = 1e-12;

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds a matrix from row slices. All rows must have the same length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Dimension(
                "rows of unequal length passed to DenseMatrix::from_rows".into(),
            ));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::Dimension(format!(
                "cannot subtract {}x{} from {}x{}",
                other.rows, other.cols, self.rows, self.cols
            )));
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(Error::Dimension(format!(
                "cannot multiply {}x{} by vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        Ok((0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Induced infinity norm: the largest absolute row sum.
    pub fn max_row_sum(&self) -> f64 {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.is_square()
            && (0..self.rows).all(|i| (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= tol))
    }

    fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }
}

impl std::ops::Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// An unordered pair of distinct agents, stored with the smaller index first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct UndirectedEdge(usize, usize);

impl UndirectedEdge {
    pub fn new(a: usize, b: usize) -> Result<Self> {
        if a == b {
            return Err(Error::InvalidEdge(format!("self-loop on agent {}", a + 1)));
        }
        Ok(Self(a.min(b), a.max(b)))
    }

    pub fn low(self) -> usize {
        self.0
    }

    pub fn high(self) -> usize {
        self.1
    }

    pub fn contains(self, node: usize) -> bool {
        self.0 == node || self.1 == node
    }
}

impl fmt::Display for UndirectedEdge {
    // 1-based, matching the v1..vn naming used in scenario files
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{},{}}}", self.0 + 1, self.1 + 1)
    }
}

/// A directed edge `source -> destination`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DirectedEdge {
    pub source: usize,
    pub destination: usize,
}

impl DirectedEdge {
    pub fn undirected(self) -> UndirectedEdge {
        UndirectedEdge(
            self.source.min(self.destination),
            self.source.max(self.destination),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeAction {
    Add,
    Remove,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TopologyEvent {
    pub time: f64,
    pub action: EdgeAction,
    pub edge: UndirectedEdge,
}

/// Undirected graph on agents `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    n: usize,
    edges: BTreeSet<UndirectedEdge>,
}

impl Topology {
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidTopology(
                "a network needs at least one agent".into(),
            ));
        }
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::InvalidEdge(format!(
                    "edge {{{},{}}} references an agent outside 1..={n}",
                    a + 1,
                    b + 1
                )));
            }
            let edge = UndirectedEdge::new(a, b)?;
            if !set.insert(edge) {
                return Err(Error::InvalidEdge(format!("duplicate edge {edge}")));
            }
        }
        Ok(Self { n, edges: set })
    }

    pub fn agent_count(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> impl Iterator<Item = UndirectedEdge> + '_ {
        self.edges.iter().copied()
    }

    pub fn undirected_edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Number of directed edges, `2 * |E|`.
    pub fn directed_edge_count(&self) -> usize {
        2 * self.edges.len()
    }

    pub fn has_edge(&self, edge: UndirectedEdge) -> bool {
        self.edges.contains(&edge)
    }

    /// Directed edges sorted by `(destination, source)`.
    pub fn directed_edges(&self) -> Vec<DirectedEdge> {
        let mut out: Vec<DirectedEdge> = self
            .edges
            .iter()
            .flat_map(|e| {
                [
                    DirectedEdge {
                        source: e.0,
                        destination: e.1,
                    },
                    DirectedEdge {
                        source: e.1,
                        destination: e.0,
                    },
                ]
            })
            .collect();
        out.sort_by_key(|e| (e.destination, e.source));
        out
    }

    /// Neighbors of every agent, each list sorted ascending.
    pub fn neighbor_lists(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n];
        for e in &self.edges {
            out[e.0].push(e.1);
            out[e.1].push(e.0);
        }
        for list in &mut out {
            list.sort_unstable();
        }
        out
    }

    pub fn degree(&self, node: usize) -> usize {
        self.edges.iter().filter(|e| e.contains(node)).count()
    }

    pub fn is_connected(&self) -> bool {
        connected_components(self).len() == 1
    }

    /// Restriction to `members`, relabeled `0..members.len()` in ascending
    /// order of the original indices.
    pub fn induced(&self, members: &[usize]) -> Result<Topology> {
        let mut sorted = members.to_vec();
        sorted.sort_unstable();
        let local = |v: usize| sorted.binary_search(&v).ok();
        let edges = self
            .edges
            .iter()
            .filter_map(|e| Some((local(e.0)?, local(e.1)?)));
        Topology::new(sorted.len(), edges)
    }

    pub fn apply(&mut self, event: &TopologyEvent) -> Result<()> {
        let edge = event.edge;
        if edge.high() >= self.n {
            return Err(Error::InvalidEdge(format!(
                "event at t={} references edge {edge} outside a {}-agent network",
                event.time, self.n
            )));
        }
        match event.action {
            EdgeAction::Add => {
                if !self.edges.insert(edge) {
                    return Err(Error::TopologyEvent(format!(
                        "cannot add edge {edge} at t={}: edge already present",
                        event.time
                    )));
                }
            }
            EdgeAction::Remove => {
                if !self.edges.remove(&edge) {
                    return Err(Error::TopologyEvent(format!(
                        "cannot remove edge {edge} at t={}: edge not present",
                        event.time
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Returns a copy of `topology` with `event` applied.
pub fn apply_event(topology: &Topology, event: &TopologyEvent) -> Result<Topology> {
    let mut next = topology.clone();
    next.apply(event)?;
    Ok(next)
}

/// Incidence matrix `B` (n x 2|E|): column for `i -> j` has -1 in row `i`
/// and +1 in row `j`.
pub fn build_incidence(topology: &Topology) -> DenseMatrix {
    let directed = topology.directed_edges();
    let mut b = DenseMatrix::zeros(topology.agent_count(), directed.len());
    for (col, e) in directed.iter().enumerate() {
        b[(e.source, col)] = -1.0;
        b[(e.destination, col)] = 1.0;
    }
    b
}

/// `L = 1/2 B B^T`.
pub fn laplacian(incidence: &DenseMatrix) -> DenseMatrix {
    incidence
        .matmul(&incidence.transpose())
        .expect("B and B^T always conform")
        .scale(0.5)
}

/// Moore-Penrose inverse of a symmetric matrix via its eigendecomposition.
/// Eigenvalues with magnitude at most `tol * max|lambda|` are treated as zero.
pub fn pseudo_inverse(a: &DenseMatrix, tol: f64) -> Result<DenseMatrix> {
    if !a.is_square() {
        return Err(Error::Contract(format!(
            "pseudo_inverse needs a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    let scale = a.max_abs().max(1.0);
    if !a.is_symmetric(1e-12 * scale) {
        return Err(Error::Contract(
            "pseudo_inverse needs a symmetric matrix".into(),
        ));
    }
    let n = a.rows();
    if n == 0 {
        return Ok(DenseMatrix::zeros(0, 0));
    }
    let eig = SymmetricEigen::new(a.to_nalgebra());
    let largest = eig.eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let cutoff = tol * largest;
    let mut out = DenseMatrix::zeros(n, n);
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda.abs() <= cutoff || lambda == 0.0 {
            continue;
        }
        let v = eig.eigenvectors.column(k);
        let inv = 1.0 / lambda;
        for i in 0..n {
            let vi = v[i] * inv;
            for j in 0..n {
                out[(i, j)] += vi * v[j];
            }
        }
    }
    Ok(out)
}

/// `M = I - (1/n) 1 1^T`.
pub fn centering_matrix(n: usize) -> DenseMatrix {
    let inv = 1.0 / n as f64;
    DenseMatrix::from_fn(n, n, |i, j| if i == j { 1.0 - inv } else { -inv })
}

/// `B (B^T B)^+` for the given topology.
pub fn incidence_gain_matrix(topology: &Topology) -> DenseMatrix {
    let b = build_incidence(topology);
    let gram = b.transpose().matmul(&b).expect("B^T and B always conform");
    let pinv = pseudo_inverse(&gram, DEFAULT_PINV_TOL).expect("B^T B is square and symmetric");
    b.matmul(&pinv).expect("B and (B^T B)^+ always conform")
}

/// `||B (B^T B)^+||_inf`, which also equals `||B (B^T B)^+ (x) I_r||_inf`
/// for every `r`. Only defined for connected graphs.
pub fn gain_norm_bound(topology: &Topology) -> Result<f64> {
    if !topology.is_connected() {
        return Err(Error::Disconnected(
            "gain norm bound is defined per connected component; split the graph first".into(),
        ));
    }
    Ok(incidence_gain_matrix(topology).max_row_sum())
}

/// Node sets of the connected components, each sorted, ordered by smallest member.
pub fn connected_components(topology: &Topology) -> Vec<Vec<usize>> {
    let n = topology.agent_count();
    let neighbors = topology.neighbor_lists();
    let mut label = vec![usize::MAX; n];
    let mut components = Vec::new();
    for start in 0..n {
        if label[start] != usize::MAX {
            continue;
        }
        let id = components.len();
        let mut members = vec![start];
        label[start] = id;
        let mut stack = vec![start];
        while let Some(v) = stack.pop() {
            for &u in &neighbors[v] {
                if label[u] == usize::MAX {
                    label[u] = id;
                    members.push(u);
                    stack.push(u);
                }
            }
        }
        members.sort_unstable();
        components.push(members);
    }
    components
}
