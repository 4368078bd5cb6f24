//! The localized logistic objective, its quadratic surrogate and gradient.
//!
//! Both nonsmooth norms are evaluated in smoothed form,
//! `|v|_2 -> sqrt(|v|^2 + eps)` and `|v| -> sqrt(v^2 + eps)`, which is the
//! function the reweighting iterations decrease monotonically. As `eps -> 0`
//! it coincides with the unsmoothed objective.

use nalgebra::DMatrix;

use super::majorizer::{smoothed_distance, smoothed_l1, GraphLaplacian};
use super::{LlrHyperparams, WeightMatrix};
use crate::data::PooledDataset;
use crate::error::{Error, Result};
use crate::graph::SimilarityGraph;

/// `log(1 + exp(z))` without overflow.
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Logistic sigmoid `1 / (1 + exp(-z))`.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn check_dims(w: &WeightMatrix, pooled: &PooledDataset) -> Result<()> {
    if w.shape() != pooled.features().shape() {
        return Err(Error::DimensionMismatch(format!(
            "weights are {:?}, pooled data is {:?}",
            w.shape(),
            pooled.features().shape()
        )));
    }
    Ok(())
}

/// `sum_i log(1 + exp(-y_i w_i^T x_i))`.
pub fn logistic_loss(w: &WeightMatrix, pooled: &PooledDataset) -> f64 {
    let x = pooled.features();
    (0..pooled.len())
        .map(|i| {
            let margin = pooled.y(i) * dot(w.column(i), x.column(i).as_slice());
            softplus(-margin)
        })
        .sum()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Network term `sum_{i != j} r_ij sqrt(|w_i - w_j|^2 + eps)` over ordered pairs.
pub fn network_penalty(w: &WeightMatrix, graph: &SimilarityGraph, epsilon: f64) -> f64 {
    2.0 * graph
        .edges()
        .map(|(i, j, r)| r * smoothed_distance(w, i, j, epsilon))
        .sum::<f64>()
}

/// Exclusive term `sum_j (sum_k sqrt(W_kj^2 + eps))^2`.
pub fn exclusive_penalty(w: &WeightMatrix, epsilon: f64) -> f64 {
    (0..w.n_samples())
        .map(|j| smoothed_l1(w.column(j), epsilon).powi(2))
        .sum()
}

/// Objective value `J(W)`.
pub fn objective(
    w: &WeightMatrix,
    pooled: &PooledDataset,
    graph: &SimilarityGraph,
    hp: &LlrHyperparams,
) -> Result<f64> {
    check_dims(w, pooled)?;
    if graph.len() != pooled.len() {
        return Err(Error::DimensionMismatch(format!(
            "graph has {} nodes, pooled data has {} samples",
            graph.len(),
            pooled.len()
        )));
    }
    let mut value = logistic_loss(w, pooled);
    if hp.lambda1 != 0.0 {
        value += hp.lambda1 * network_penalty(w, graph, hp.epsilon);
    }
    if hp.lambda2 != 0.0 {
        value += hp.lambda2 * exclusive_penalty(w, hp.epsilon);
    }
    Ok(value)
}

/// The constant `c_t` with `J(W_t) = J~_t(W_t) + c_t`, so that
/// `J(W) <= J~_t(W) + c_t` for every `W`.
pub fn majorization_offset(
    anchor: &WeightMatrix,
    graph: &SimilarityGraph,
    ce: &DMatrix<f64>,
    hp: &LlrHyperparams,
) -> f64 {
    let eps = hp.epsilon;
    let network: f64 = graph
        .edges()
        .map(|(i, j, r)| {
            let s = smoothed_distance(anchor, i, j, eps);
            r * (s + eps / s)
        })
        .sum();
    let exclusive = eps * ce.sum();
    hp.lambda1 * network + hp.lambda2 * exclusive
}

/// The reweighted quadratic surrogate for fixed `C_g`, `C_e`.
#[derive(Debug, Clone, Copy)]
pub struct Surrogate<'a> {
    pub pooled: &'a PooledDataset,
    pub cg: &'a GraphLaplacian,
    pub ce: &'a DMatrix<f64>,
    pub lambda1: f64,
    pub lambda2: f64,
}

impl<'a> Surrogate<'a> {
    pub fn new(
        pooled: &'a PooledDataset,
        cg: &'a GraphLaplacian,
        ce: &'a DMatrix<f64>,
        hp: &LlrHyperparams,
    ) -> Result<Self> {
        if cg.len() != pooled.len() || ce.shape() != pooled.features().shape() {
            return Err(Error::DimensionMismatch(
                "reweighting matrices do not match the pooled data".into(),
            ));
        }
        Ok(Surrogate {
            pooled,
            cg,
            ce,
            lambda1: hp.lambda1,
            lambda2: hp.lambda2,
        })
    }

    pub fn value(&self, w: &WeightMatrix) -> Result<f64> {
        check_dims(w, self.pooled)?;
        let mut scratch = vec![0.0; w.as_matrix().len()];
        Ok(self.value_grad(w.as_matrix().as_slice(), &mut scratch))
    }

    pub fn gradient(&self, w: &WeightMatrix) -> Result<DMatrix<f64>> {
        check_dims(w, self.pooled)?;
        let (d, n) = w.shape();
        let mut g = vec![0.0; d * n];
        self.value_grad(w.as_matrix().as_slice(), &mut g);
        Ok(DMatrix::from_vec(d, n, g))
    }

    /// Value and gradient on the column-major flattening of `W`.
    pub fn value_grad(&self, w: &[f64], grad: &mut [f64]) -> f64 {
        let x = self.pooled.features();
        let d = x.nrows();
        let xs = x.as_slice();
        let mut value = 0.0;

        for i in 0..self.pooled.len() {
            let cols = i * d..(i + 1) * d;
            let (wi, xi) = (&w[cols.clone()], &xs[cols.clone()]);
            let y = self.pooled.y(i);
            let margin = y * dot(wi, xi);
            value += softplus(-margin);
            let coef = -y * sigmoid(-margin);
            for (g, xv) in grad[cols].iter_mut().zip(xi) {
                *g = coef * xv;
            }
        }

        if self.lambda2 != 0.0 {
            let ce = self.ce.as_slice();
            let mut ex = 0.0;
            for ((g, &wv), &c) in grad.iter_mut().zip(w).zip(ce) {
                ex += c * wv * wv;
                *g += 2.0 * self.lambda2 * c * wv;
            }
            value += self.lambda2 * ex;
        }

        if self.lambda1 != 0.0 {
            let mut net = 0.0;
            let scale = 2.0 * self.lambda1;
            for &(i, j, a) in self.cg.edges() {
                let mut sq = 0.0;
                for k in 0..d {
                    let diff = w[i * d + k] - w[j * d + k];
                    sq += diff * diff;
                    grad[i * d + k] += scale * a * diff;
                    grad[j * d + k] -= scale * a * diff;
                }
                net += a * sq;
            }
            value += self.lambda1 * net;
        }
        value
    }

    /// Inverse of a diagonal upper model of the Hessian, for preconditioning.
    pub fn inverse_diagonal(&self) -> Vec<f64> {
        let x = self.pooled.features();
        let d = x.nrows();
        let deg = self.cg.diagonal();
        x.as_slice()
            .iter()
            .zip(self.ce.as_slice())
            .enumerate()
            .map(|(idx, (&xv, &c))| {
                let i = idx / d;
                let h = 0.25 * xv * xv + 2.0 * self.lambda1 * deg[i] + 2.0 * self.lambda2 * c;
                if h > 0.0 {
                    1.0 / h
                } else {
                    1.0
                }
            })
            .collect()
    }
}
