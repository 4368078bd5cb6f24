use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, PooledDataset};
use crate::error::{Error, Result};
use crate::llr::{sigmoid, softplus};
use crate::scores::{prior_scaled_exp, ScoreSet};

/// Single shared coefficient vector of the l1-regularized logistic model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub w: Vec<f64>,
    pub lambda: f64,
    /// Subgradient optimality residual at `w`.
    pub residual: f64,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct L1lrOptions {
    pub max_iters: usize,
    /// Target for [`l1_optimality_residual`].
    pub tol: f64,
}

impl Default for L1lrOptions {
    fn default() -> Self {
        L1lrOptions {
            max_iters: 50_000,
            tol: 1e-7,
        }
    }
}

fn loss_grad(pooled: &PooledDataset, w: &[f64], grad: &mut [f64]) -> f64 {
    let x = pooled.features();
    grad.iter_mut().for_each(|g| *g = 0.0);
    let mut loss = 0.0;
    for i in 0..pooled.len() {
        let col = x.column(i);
        let y = pooled.y(i);
        let margin = y * col.iter().zip(w).map(|(a, b)| a * b).sum::<f64>();
        loss += softplus(-margin);
        let coef = -y * sigmoid(-margin);
        for (g, v) in grad.iter_mut().zip(col.iter()) {
            *g += coef * v;
        }
    }
    loss
}

fn loss_only(pooled: &PooledDataset, w: &[f64]) -> f64 {
    let x = pooled.features();
    (0..pooled.len())
        .map(|i| {
            let m = pooled.y(i) * x.column(i).iter().zip(w).map(|(a, b)| a * b).sum::<f64>();
            softplus(-m)
        })
        .sum()
}

/// Smallest `lambda` for which `w = 0` is optimal: `max_k |sum_i y_i x_ki| / 2`.
pub fn l1lr_lambda_max(pooled: &PooledDataset) -> f64 {
    let x = pooled.features();
    (0..pooled.dim())
        .map(|k| {
            (0..pooled.len())
                .map(|i| pooled.y(i) * x[(k, i)])
                .sum::<f64>()
                .abs()
                / 2.0
        })
        .fold(0.0, f64::max)
}

/// Worst violation of the l1 optimality conditions: `|g_k + lambda sign(w_k)|`
/// on nonzero coordinates and `max(|g_k| - lambda, 0)` on zero ones.
pub fn l1_optimality_residual(grad: &[f64], w: &[f64], lambda: f64) -> f64 {
    grad.iter()
        .zip(w)
        .map(|(&g, &wk)| {
            if wk != 0.0 {
                (g + lambda * wk.signum()).abs()
            } else {
                (g.abs() - lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Fits `sum_i log(1 + exp(-y_i w^T x_i)) + lambda |w|_1` by FISTA with
/// backtracking and gradient-based adaptive restart.
///
/// Hitting the iteration limit is not an error: the best iterate is returned
/// with `converged = false`.
pub fn l1lr_fit(pooled: &PooledDataset, lambda: f64, opts: &L1lrOptions) -> Result<LinearModel> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!("lambda must be >= 0, got {lambda}")));
    }
    let d = pooled.dim();
    let x = pooled.features();
    let frob2: f64 = x.iter().map(|v| v * v).sum();
    let mut step = 4.0 / frob2.max(1e-12);

    let mut w = vec![0.0; d];
    let mut y = w.clone();
    let mut t = 1.0f64;
    let mut grad = vec![0.0; d];
    let mut grad_w = vec![0.0; d];
    let mut iterations = 0;
    let mut residual = {
        loss_grad(pooled, &w, &mut grad_w);
        l1_optimality_residual(&grad_w, &w, lambda)
    };

    while iterations < opts.max_iters && residual > opts.tol {
        iterations += 1;
        let f_y = loss_grad(pooled, &y, &mut grad);
        // backtracking on the smooth part
        let next = loop {
            let cand: Vec<f64> = y
                .iter()
                .zip(&grad)
                .map(|(v, g)| soft_threshold(v - step * g, step * lambda))
                .collect();
            let diff: Vec<f64> = cand.iter().zip(&y).map(|(a, b)| a - b).collect();
            let model = f_y
                + diff.iter().zip(&grad).map(|(a, b)| a * b).sum::<f64>()
                + diff.iter().map(|v| v * v).sum::<f64>() / (2.0 * step);
            if loss_only(pooled, &cand) <= model + 1e-12 * (1.0 + f_y.abs()) || step < 1e-20 {
                break cand;
            }
            step *= 0.5;
        };
        // gradient-based adaptive restart
        let restart = y
            .iter()
            .zip(&next)
            .zip(&w)
            .map(|((yv, n), wv)| (yv - n) * (n - wv))
            .sum::<f64>()
            > 0.0;
        let prev = std::mem::replace(&mut w, next);
        if restart {
            t = 1.0;
            y = w.clone();
        } else {
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let mom = (t - 1.0) / t_next;
            y = w.iter().zip(&prev).map(|(a, b)| a + mom * (a - b)).collect();
            t = t_next;
        }
        loss_grad(pooled, &w, &mut grad_w);
        residual = l1_optimality_residual(&grad_w, &w, lambda);
        // let the step grow back after conservative backtracks
        step *= 1.1;
    }

    Ok(LinearModel {
        w,
        lambda,
        residual,
        converged: residual <= opts.tol,
        iterations,
    })
}

/// `(n / n') exp(w^T x)` for each query sample.
pub fn l1lr_score(model: &LinearModel, query: &Dataset, n_test: usize, n_inlier: usize) -> Result<ScoreSet> {
    if query.dim() != model.w.len() {
        return Err(Error::DimensionMismatch(format!(
            "model has {} features, query has {}",
            model.w.len(),
            query.dim()
        )));
    }
    let w = DVector::from_column_slice(&model.w);
    let scores = query
        .features()
        .column_iter()
        .map(|c| prior_scaled_exp(c.dot(&w), n_test, n_inlier).max(f64::MIN_POSITIVE))
        .collect();
    ScoreSet::new(query.sample_ids().to_vec(), scores, None)
}
