//! Undirected simple graphs and their spectral-domain matrices.

mod io;
mod knn;
mod sample;

use std::collections::BTreeSet;

pub use io::{features_to_csv, parse_edge_list, parse_features_csv, read_edge_list, read_features_csv, write_edge_list};
pub use knn::{knn_selection, knn_similarity_graph};
pub use sample::{derive_seed, sample_neighbors, NeighborSample};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// Undirected graph without self-loops or parallel edges, optionally
/// carrying one feature row per node.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph<T = f64> {
    node_count: usize,
    edges: BTreeSet<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
    features: Option<Matrix<T>>,
}

impl<T: Scalar> Graph<T> {
    /// Builds a graph from unordered pairs. Self-loops, duplicates (in either
    /// orientation) and out-of-range endpoints are rejected.
    pub fn new(node_count: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut set = BTreeSet::new();
        for (u, v) in edges {
            if u >= node_count || v >= node_count {
                return Err(Error::contract(format!("edge ({u}, {v}) out of range for {node_count} nodes")));
            }
            if u == v {
                return Err(Error::contract(format!("self-loop at node {u}")));
            }
            if !set.insert((u.min(v), u.max(v))) {
                return Err(Error::contract(format!("duplicate edge ({u}, {v})")));
            }
        }
        Ok(Self::from_edge_set(node_count, set))
    }

    pub(crate) fn from_edge_set(node_count: usize, edges: BTreeSet<(usize, usize)>) -> Self {
        let mut adjacency = vec![Vec::new(); node_count];
        for &(u, v) in &edges {
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Self {
            node_count,
            edges,
            adjacency,
            features: None,
        }
    }

    pub fn empty(node_count: usize) -> Self {
        Self::from_edge_set(node_count, BTreeSet::new())
    }

    pub fn complete(node_count: usize) -> Self {
        let edges = (0..node_count).flat_map(|u| (u + 1..node_count).map(move |v| (u, v))).collect();
        Self::from_edge_set(node_count, edges)
    }

    pub fn with_features(mut self, features: Matrix<T>) -> Result<Self> {
        if features.rows() != self.node_count {
            return Err(Error::Shape {
                op: "Graph::with_features",
                left: (self.node_count, 0),
                right: features.shape(),
            });
        }
        self.features = Some(features);
        Ok(self)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges as `(u, v)` with `u < v`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.edges.contains(&(u.min(v), u.max(v)))
    }

    /// Sorted neighbor list of `v`.
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }

    pub fn max_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn features(&self) -> Option<&Matrix<T>> {
        self.features.as_ref()
    }

    /// Renames node `i` to `perm[i]`; features are permuted to follow.
    pub fn relabel(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.node_count)?;
        let edges = self.edges.iter().map(|&(u, v)| (perm[u].min(perm[v]), perm[u].max(perm[v]))).collect();
        let mut g = Self::from_edge_set(self.node_count, edges);
        if let Some(f) = &self.features {
            let mut inverse = vec![0; perm.len()];
            for (i, &p) in perm.iter().enumerate() {
                inverse[p] = i;
            }
            g.features = Some(f.select_rows(&inverse));
        }
        Ok(g)
    }

    /// Number of connected components and the component id of each node.
    pub fn components(&self) -> (usize, Vec<usize>) {
        let mut id = vec![usize::MAX; self.node_count];
        let mut count = 0;
        for start in 0..self.node_count {
            if id[start] != usize::MAX {
                continue;
            }
            let mut stack = vec![start];
            id[start] = count;
            while let Some(u) = stack.pop() {
                for &w in &self.adjacency[u] {
                    if id[w] == usize::MAX {
                        id[w] = count;
                        stack.push(w);
                    }
                }
            }
            count += 1;
        }
        (count, id)
    }
}

pub(crate) fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
        return Err(Error::contract("not a permutation"));
    }
    Ok(())
}

/// 0/1 adjacency matrix `A`.
pub fn adjacency_matrix<T: Scalar>(g: &Graph<T>) -> Matrix<T> {
    let n = g.node_count();
    let mut a = Matrix::zeros(n, n);
    for (u, v) in g.edges() {
        a[(u, v)] = T::one();
        a[(v, u)] = T::one();
    }
    a
}

/// Diagonal degree matrix `D`.
pub fn degree_matrix<T: Scalar>(g: &Graph<T>) -> Matrix<T> {
    let degrees: Vec<T> = (0..g.node_count()).map(|v| T::lit(g.degree(v) as f64)).collect();
    Matrix::diag(&degrees)
}

/// Combinatorial Laplacian `L = D − A`.
pub fn laplacian<T: Scalar>(g: &Graph<T>) -> Matrix<T> {
    let mut l = degree_matrix(g);
    for (u, v) in g.edges() {
        l[(u, v)] = -T::one();
        l[(v, u)] = -T::one();
    }
    l
}

/// Renormalized propagation operator `D̃^(−1/2) (A + I) D̃^(−1/2)`, where
/// `D̃` is the degree matrix of `A + I`.
pub fn normalized_adjacency<T: Scalar>(g: &Graph<T>) -> Matrix<T> {
    let n = g.node_count();
    let inv_sqrt: Vec<T> = (0..n).map(|v| T::one() / T::lit((g.degree(v) + 1) as f64).sqrt()).collect();
    let mut a = Matrix::zeros(n, n);
    for v in 0..n {
        a[(v, v)] = inv_sqrt[v] * inv_sqrt[v];
    }
    for (u, v) in g.edges() {
        let w = inv_sqrt[u] * inv_sqrt[v];
        a[(u, v)] = w;
        a[(v, u)] = w;
    }
    a
}
