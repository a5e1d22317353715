//! k-NN similarity graph and its symmetric degree normalization.
//!
//! Edge weights are clamped inner products: for every node `j`, the `k` other
//! nodes with the largest `⟨v_i, v_j⟩` receive `A_ij = max(⟨v_i, v_j⟩, 0)`,
//! and the result is symmetrized with an elementwise max. Ties in the
//! neighbor ranking resolve to the lower index.

use std::cmp::Ordering;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;
use crate::types::FeatureMatrix;

/// Symmetric adjacency `A`, degrees `D = A·1` and `Ā = D^{-1/2} A D^{-1/2}`.
#[derive(Clone, Debug)]
pub struct SparseGraph {
    adjacency: CsrMatrix,
    degrees: Vec<f64>,
    normalized: CsrMatrix,
}

impl SparseGraph {
    pub fn adjacency(&self) -> &CsrMatrix {
        &self.adjacency
    }

    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    pub fn normalized(&self) -> &CsrMatrix {
        &self.normalized
    }

    pub fn n(&self) -> usize {
        self.degrees.len()
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Neighbor ranking: larger similarity first, then lower index.
#[inline]
fn rank(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
}

/// The `k` nodes most similar to `query` (excluding itself), best first.
pub fn nearest_by_inner_product(
    features: &FeatureMatrix,
    query: usize,
    k: usize,
) -> Vec<(f64, usize)> {
    let q = features.row(query);
    let mut scored: Vec<(f64, usize)> = features
        .rows()
        .enumerate()
        .filter(|&(i, _)| i != query)
        .map(|(i, v)| (dot(v, q), i))
        .collect();
    if k < scored.len() {
        scored.select_nth_unstable_by(k - 1, rank);
        scored.truncate(k);
    }
    scored.sort_unstable_by(rank);
    scored
}

/// Symmetric k-NN adjacency over inner-product similarity.
pub fn knn_adjacency(features: &FeatureMatrix, k: usize) -> Result<CsrMatrix> {
    let n = features.n();
    if k == 0 || k >= n {
        return Err(Error::input(format!(
            "k must satisfy 1 <= k < N, got k={k} with N={n}"
        )));
    }

    let directed: Vec<Vec<(usize, usize, f64)>> = (0..n)
        .into_par_iter()
        .map(|j| {
            nearest_by_inner_product(features, j, k)
                .into_iter()
                .map(|(s, i)| (i, j, s.max(0.0)))
                .collect()
        })
        .collect();

    let mut triplets = Vec::with_capacity(2 * n * k);
    for (i, j, w) in directed.into_iter().flatten() {
        triplets.push((i, j, w));
        triplets.push((j, i, w));
    }
    let adjacency = CsrMatrix::from_triplets(n, triplets, f64::max)?;

    if let Some(node) = adjacency.row_sums().iter().position(|&d| d <= 0.0) {
        return Err(Error::DegenerateGraph { node });
    }
    Ok(adjacency)
}

/// Degree normalization. `adjacency` must be symmetric, nonnegative, with a
/// zero diagonal and strictly positive row sums.
pub fn normalize(adjacency: CsrMatrix) -> Result<SparseGraph> {
    let n = adjacency.n();
    for i in 0..n {
        for (j, v) in adjacency.row(i) {
            if i == j {
                return Err(Error::input(format!("self-loop at node {i}")));
            }
            if v < 0.0 {
                return Err(Error::input(format!("negative weight {v} at ({i}, {j})")));
            }
        }
    }
    if !adjacency.is_symmetric() {
        return Err(Error::input("adjacency matrix is not symmetric"));
    }
    let degrees = adjacency.row_sums();
    if let Some(node) = degrees.iter().position(|&d| d <= 0.0) {
        return Err(Error::DegenerateGraph { node });
    }
    // D_i * D_j commutes exactly, so the scaled values stay bitwise symmetric.
    let normalized = adjacency.map_values(|i, j, a| a / (degrees[i] * degrees[j]).sqrt());
    Ok(SparseGraph {
        adjacency,
        degrees,
        normalized,
    })
}

/// Convenience composition of [`knn_adjacency`] and [`normalize`].
pub fn build_graph(features: &FeatureMatrix, k: usize) -> Result<SparseGraph> {
    normalize(knn_adjacency(features, k)?)
}
