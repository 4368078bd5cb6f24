//! Quadratic reweighting matrices that majorize the two nonsmooth penalties
//! around an anchor iterate.

use nalgebra::DMatrix;

use super::WeightMatrix;
use crate::graph::SimilarityGraph;

/// Weighted graph Laplacian `C_g`, stored as its edge list.
///
/// Off-diagonal entries are `-a_ij` and the diagonal holds the row sums
/// `sum_j a_ij`, where `a_ij = r_ij / sqrt(|w_i - w_j|^2 + eps)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphLaplacian {
    n: usize,
    /// `(i, j, a_ij)` with `i < j`.
    edges: Vec<(usize, usize, f64)>,
    degree: Vec<f64>,
}

impl GraphLaplacian {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    /// Diagonal entries `[C_g]_ii`.
    pub fn diagonal(&self) -> &[f64] {
        &self.degree
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n, self.n);
        for &(i, j, a) in &self.edges {
            out[(i, j)] = -a;
            out[(j, i)] = -a;
        }
        for (i, &d) in self.degree.iter().enumerate() {
            out[(i, i)] = d;
        }
        out
    }

    /// `tr(W C_g W^T) = sum_{i<j} a_ij |w_i - w_j|^2`.
    pub fn quad_form(&self, w: &DMatrix<f64>) -> f64 {
        assert_eq!(w.ncols(), self.n);
        let d = w.nrows();
        let s = w.as_slice();
        self.edges
            .iter()
            .map(|&(i, j, a)| {
                let (wi, wj) = (&s[i * d..(i + 1) * d], &s[j * d..(j + 1) * d]);
                a * wi.iter().zip(wj).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()
            })
            .sum()
    }

    /// `W C_g`, column `i` equal to `sum_j a_ij (w_i - w_j)`.
    pub fn right_apply(&self, w: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(w.ncols(), self.n);
        let d = w.nrows();
        let mut out = DMatrix::zeros(d, self.n);
        let s = w.as_slice();
        let o = out.as_mut_slice();
        for &(i, j, a) in &self.edges {
            for k in 0..d {
                let diff = a * (s[i * d + k] - s[j * d + k]);
                o[i * d + k] += diff;
                o[j * d + k] -= diff;
            }
        }
        out
    }
}

/// Builds the network-penalty reweighting Laplacian at anchor `w`.
pub fn majorizer_cg(w: &WeightMatrix, graph: &SimilarityGraph, epsilon: f64) -> GraphLaplacian {
    assert!(epsilon > 0.0, "epsilon must be positive");
    let n = graph.len();
    assert_eq!(w.n_samples(), n, "weights and graph disagree on sample count");
    let mut edges = Vec::new();
    for (i, j, r) in graph.edges() {
        let a = r / smoothed_distance(w, i, j, epsilon);
        edges.push((i, j, a));
    }
    let mut degree = vec![0.0; n];
    // accumulate each row in column order so row sums cancel exactly
    for i in 0..n {
        let mut sum = 0.0;
        for &(j, r) in graph.neighbors(i) {
            sum += r / smoothed_distance(w, i, j, epsilon);
        }
        degree[i] = sum;
    }
    GraphLaplacian { n, edges, degree }
}

/// `sqrt(|w_i - w_j|^2 + eps)`.
pub fn smoothed_distance(w: &WeightMatrix, i: usize, j: usize, epsilon: f64) -> f64 {
    let (a, b) = (w.column(i), w.column(j));
    let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (sq + epsilon).sqrt()
}

/// Smoothed column l1 norm `sum_k sqrt(W_kj^2 + eps)`.
pub fn smoothed_l1(column: &[f64], epsilon: f64) -> f64 {
    column.iter().map(|v| (v * v + epsilon).sqrt()).sum()
}

/// Exclusive-penalty reweighting matrix at anchor `w`:
/// `[C_e]_kj = |w_j|_{1,eps} / sqrt(W_kj^2 + eps)`.
pub fn majorizer_ce(w: &WeightMatrix, epsilon: f64) -> DMatrix<f64> {
    assert!(epsilon > 0.0, "epsilon must be positive");
    let (d, n) = w.shape();
    let mut out = DMatrix::zeros(d, n);
    for j in 0..n {
        let col = w.column(j);
        let l1 = smoothed_l1(col, epsilon);
        for (k, v) in col.iter().enumerate() {
            out[(k, j)] = l1 / (v * v + epsilon).sqrt();
        }
    }
    out
}
