use std::collections::BTreeSet;

use super::Graph;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// For each row, the `k` other rows with the highest cosine similarity,
/// ties going to the lower index. Zero-norm rows are rejected.
pub fn knn_selection<T: Scalar>(features: &Matrix<T>, k: usize) -> Result<Vec<Vec<usize>>> {
    let n = features.rows();
    if n < k + 1 {
        return Err(Error::contract(format!("kNN with k={k} needs at least {} rows, got {n}", k + 1)));
    }
    let norms: Vec<T> = (0..n)
        .map(|r| features.row(r).iter().map(|&x| x * x).sum::<T>().sqrt())
        .collect();
    if let Some(row) = norms.iter().position(|&x| x == T::zero()) {
        return Err(Error::DegenerateFeature { row });
    }
    let gram = features.matmul_t(features)?;
    let mut selection = Vec::with_capacity(n);
    for i in 0..n {
        let mut others: Vec<(T, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| (gram[(i, j)] / (norms[i] * norms[j]), j))
            .collect();
        others.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("finite similarity").then(a.1.cmp(&b.1)));
        selection.push(others.into_iter().take(k).map(|(_, j)| j).collect());
    }
    Ok(selection)
}

/// Cosine kNN graph, symmetrized by union. The result carries `features`.
pub fn knn_similarity_graph<T: Scalar>(features: &Matrix<T>, k: usize) -> Result<Graph<T>> {
    let selection = knn_selection(features, k)?;
    let mut edges = BTreeSet::new();
    for (i, picks) in selection.iter().enumerate() {
        for &j in picks {
            edges.insert((i.min(j), i.max(j)));
        }
    }
    Graph::from_edge_set(features.rows(), edges).with_features(features.clone())
}
