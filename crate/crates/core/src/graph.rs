//! k-nearest-neighbor Gaussian similarity graph over pooled samples.

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Default neighbor count, clamped to `m - 1` for small inputs.
pub const DEFAULT_K: usize = 10;

/// Squared Euclidean distance between columns `i` and `j`.
pub(crate) fn sq_dist(data: &DMatrix<f64>, i: usize, j: usize) -> f64 {
    data.column(i)
        .iter()
        .zip(data.column(j).iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

/// Squared Euclidean distance between column `i` of `a` and column `j` of `b`.
pub(crate) fn sq_dist_between(a: &DMatrix<f64>, i: usize, b: &DMatrix<f64>, j: usize) -> f64 {
    a.column(i)
        .iter()
        .zip(b.column(j).iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum()
}

/// Median of all pairwise Euclidean distances between columns.
///
/// For an even number of pairs the two central order statistics are averaged.
pub fn median_heuristic(data: &DMatrix<f64>) -> Result<f64> {
    let m = data.ncols();
    if m < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: m });
    }
    let mut dists: Vec<f64> = (0..m)
        .into_par_iter()
        .flat_map_iter(|i| ((i + 1)..m).map(move |j| sq_dist(data, i, j).sqrt()))
        .collect();
    let len = dists.len();
    let mid = len / 2;
    let (_, &mut upper, _) = dists.select_nth_unstable_by(mid, f64::total_cmp);
    let median = if len % 2 == 1 {
        upper
    } else {
        // the lower central value is the max of the left partition
        let lower = dists[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    };
    if median <= 0.0 {
        return Err(Error::DegenerateData(
            "median pairwise distance is zero".into(),
        ));
    }
    Ok(median)
}

/// Sparse symmetric similarity weights `r_ij` with zero diagonal.
///
/// Rows are stored as neighbor lists sorted by column index.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityGraph {
    rows: Vec<Vec<(usize, f64)>>,
    k_neighbors: usize,
    sigma2: f64,
}

impl SimilarityGraph {
    /// Builds a graph directly from symmetric weighted edges `(i, j, r_ij)`,
    /// each undirected edge listed once. Used for hand-made instances.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut rows = vec![Vec::new(); n];
        for &(i, j, w) in edges {
            if i >= n || j >= n || i == j {
                return Err(Error::InvalidParameter(format!("bad edge ({i}, {j}) for {n} nodes")));
            }
            if !(0.0..=1.0).contains(&w) {
                return Err(Error::InvalidParameter(format!("edge weight {w} outside [0, 1]")));
            }
            rows[i].push((j, w));
            rows[j].push((i, w));
        }
        for row in &mut rows {
            row.sort_by_key(|&(j, _)| j);
            if row.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(Error::InvalidParameter("duplicate edge".into()));
            }
        }
        Ok(SimilarityGraph {
            rows,
            k_neighbors: 0,
            sigma2: f64::NAN,
        })
    }

    /// A graph with no edges.
    pub fn empty(n: usize) -> Self {
        SimilarityGraph {
            rows: vec![Vec::new(); n],
            k_neighbors: 0,
            sigma2: f64::NAN,
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn k_neighbors(&self) -> usize {
        self.k_neighbors
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// Nonzero entries of row `i`, sorted by column.
    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.rows[i]
            .binary_search_by_key(&j, |&(c, _)| c)
            .map(|pos| self.rows[i][pos].1)
            .unwrap_or(0.0)
    }

    /// Each undirected edge once, as `(i, j, r_ij)` with `i < j`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.rows.iter().enumerate().flat_map(|(i, row)| {
            row.iter()
                .filter(move |&&(j, _)| j > i)
                .map(move |&(j, w)| (i, j, w))
        })
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut out = DMatrix::zeros(n, n);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, w) in row {
                out[(i, j)] = w;
            }
        }
        out
    }

    /// Writes `(i, j, r_ij)` triples for every stored nonzero entry.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        let mut write = || -> std::io::Result<()> {
            writeln!(out, "i,j,r")?;
            for (i, row) in self.rows.iter().enumerate() {
                for &(j, w) in row {
                    writeln!(out, "{i},{j},{w}")?;
                }
            }
            out.flush()
        };
        write().map_err(|e| Error::io(path, e))
    }
}

/// Builds the symmetrized kNN Gaussian graph over the columns of `data`.
///
/// Directed weights `exp(-|x_i - x_j|^2 / (2 sigma2))` are kept for the `k`
/// nearest neighbors of each sample (ties by smaller index), then averaged
/// with their transposes.
pub fn knn_graph(data: &DMatrix<f64>, k: usize, sigma2: f64) -> Result<SimilarityGraph> {
    let m = data.ncols();
    if k == 0 || k >= m {
        return Err(Error::InvalidK { k, m });
    }
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::InvalidParameter(format!("sigma2 must be positive, got {sigma2}")));
    }
    let directed: Vec<Vec<(usize, f64)>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut cand: Vec<(f64, usize)> = (0..m)
                .filter(|&j| j != i)
                .map(|j| (sq_dist(data, i, j), j))
                .collect();
            cand.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            cand.truncate(k);
            cand.into_iter()
                .map(|(d2, j)| (j, (-d2 / (2.0 * sigma2)).exp()))
                .collect()
        })
        .collect();

    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
    for (i, nbrs) in directed.iter().enumerate() {
        for &(j, w) in nbrs {
            rows[i].push((j, 0.5 * w));
            rows[j].push((i, 0.5 * w));
        }
    }
    for row in &mut rows {
        row.sort_by_key(|&(j, _)| j);
        // merge the two halves of mutual edges
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
        for &(j, w) in row.iter() {
            match merged.last_mut() {
                Some(last) if last.0 == j => last.1 += w,
                _ => merged.push((j, w)),
            }
        }
        *row = merged;
    }
    Ok(SimilarityGraph {
        rows,
        k_neighbors: k,
        sigma2,
    })
}
