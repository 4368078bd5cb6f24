//! Localized logistic regression fitted by majorize–minimize reweighting.
//!
//! Each pooled sample `i` owns a coefficient column `w_i`. The fit minimizes
//!
//! ```text
//! J(W) = sum_i log(1 + exp(-y_i w_i^T x_i))
//!      + lambda1 * sum_{i != j} r_ij |w_i - w_j|_2
//!      + lambda2 * sum_i |w_i|_1^2
//! ```
//!
//! by repeatedly replacing both penalties with quadratic upper bounds that
//! touch them at the current iterate ([`majorizer_cg`], [`majorizer_ce`]) and
//! minimizing the resulting smooth convex surrogate with nonlinear conjugate
//! gradient. Every outer step therefore decreases `J`.

mod majorizer;
mod model;
mod objective;

use log::debug;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use majorizer::{majorizer_ce, majorizer_cg, smoothed_distance, smoothed_l1, GraphLaplacian};
pub use model::LlrModel;
pub use objective::{
    exclusive_penalty, logistic_loss, majorization_offset, network_penalty, objective, sigmoid,
    softplus, Surrogate,
};

use crate::data::{pool, Dataset, PooledDataset};
use crate::error::{Error, Result};
use crate::graph::{knn_graph, median_heuristic, SimilarityGraph, DEFAULT_K};
use crate::optim::{self, NcgOptions};

/// Coefficient matrix `W`, `d × (n + n')`, one column per pooled sample.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix(DMatrix<f64>);

impl WeightMatrix {
    pub fn new(values: DMatrix<f64>) -> Self {
        WeightMatrix(values)
    }

    pub fn zeros(d: usize, n: usize) -> Self {
        WeightMatrix(DMatrix::zeros(d, n))
    }

    /// `(d, n + n')`.
    pub fn shape(&self) -> (usize, usize) {
        self.0.shape()
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.0.ncols()
    }

    pub fn column(&self, i: usize) -> &[f64] {
        let d = self.0.nrows();
        &self.0.as_slice()[i * d..(i + 1) * d]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

/// Regularization strengths, graph settings and solver tolerances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlrHyperparams {
    pub lambda1: f64,
    pub lambda2: f64,
    pub k_neighbors: usize,
    /// Squared graph kernel width; `None` selects the median heuristic.
    pub sigma2: Option<f64>,
    pub epsilon: f64,
    pub outer_max_iters: usize,
    pub outer_rel_tol: f64,
    pub inner_max_iters: usize,
    pub inner_grad_tol: f64,
}

impl Default for LlrHyperparams {
    fn default() -> Self {
        LlrHyperparams {
            lambda1: 0.1,
            lambda2: 1.0,
            k_neighbors: DEFAULT_K,
            sigma2: None,
            epsilon: 1e-10,
            outer_max_iters: 100,
            outer_rel_tol: 1e-6,
            inner_max_iters: 2000,
            inner_grad_tol: 1e-6,
        }
    }
}

impl LlrHyperparams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.lambda1 >= 0.0 && self.lambda1.is_finite()) {
            return bad(format!("lambda1 must be >= 0, got {}", self.lambda1));
        }
        if !(self.lambda2 >= 0.0 && self.lambda2.is_finite()) {
            return bad(format!("lambda2 must be >= 0, got {}", self.lambda2));
        }
        if self.k_neighbors == 0 {
            return bad("k_neighbors must be >= 1".into());
        }
        if let Some(s) = self.sigma2 {
            if !(s > 0.0 && s.is_finite()) {
                return bad(format!("sigma2 must be > 0, got {s}"));
            }
        }
        for (name, v) in [
            ("epsilon", self.epsilon),
            ("outer_rel_tol", self.outer_rel_tol),
            ("inner_grad_tol", self.inner_grad_tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be > 0, got {v}"));
            }
        }
        if self.outer_max_iters == 0 || self.inner_max_iters == 0 {
            return bad("iteration limits must be >= 1".into());
        }
        Ok(())
    }
}

/// Surrogate values around one outer step: `J~_t` at the anchor `W_t` and at
/// the new iterate `W_{t+1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuterStep {
    pub surrogate_at_anchor: f64,
    pub surrogate_at_next: f64,
    pub inner_iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub weights: WeightMatrix,
    /// `J` at `W_0, W_1, ...`; length `iterations + 1`.
    pub objective_trace: Vec<f64>,
    pub steps: Vec<OuterStep>,
    pub converged: bool,
    pub iterations: usize,
    pub graph: SimilarityGraph,
}

/// Minimizes the surrogate for fixed `C_g`, `C_e`, warm-starting from `w0`.
///
/// The returned iterate never has a larger surrogate value than `w0`.
pub fn solve_inner(
    pooled: &PooledDataset,
    cg: &GraphLaplacian,
    ce: &DMatrix<f64>,
    hp: &LlrHyperparams,
    w0: &WeightMatrix,
) -> Result<(WeightMatrix, optim::NcgReport)> {
    let surrogate = Surrogate::new(pooled, cg, ce, hp)?;
    if w0.shape() != pooled.features().shape() {
        return Err(Error::DimensionMismatch("initial weights do not match pooled data".into()));
    }
    let (d, n) = w0.shape();
    let mut x = w0.as_matrix().as_slice().to_vec();
    let precond = surrogate.inverse_diagonal();
    let opts = NcgOptions {
        max_iters: hp.inner_max_iters,
        grad_tol: hp.inner_grad_tol,
        ..NcgOptions::default()
    };
    let report = optim::minimize(&mut x, |w, g| surrogate.value_grad(w, g), Some(&precond), &opts)?;
    Ok((WeightMatrix::new(DMatrix::from_vec(d, n, x)), report))
}

/// Pools the samples, builds the similarity graph and runs [`fit_pooled`].
pub fn fit(inliers: &Dataset, test: &Dataset, hp: &LlrHyperparams) -> Result<FitResult> {
    hp.validate()?;
    let pooled = pool(inliers, test)?;
    let graph = build_graph(&pooled, hp)?;
    fit_pooled(&pooled, graph, hp)
}

/// The similarity graph used by [`fit`]: `K` clamped to `m - 1`, width from
/// the median heuristic unless `hp.sigma2` is set.
pub fn build_graph(pooled: &PooledDataset, hp: &LlrHyperparams) -> Result<SimilarityGraph> {
    let m = pooled.len();
    if m < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: m });
    }
    let sigma2 = match hp.sigma2 {
        Some(s) => s,
        None => median_heuristic(pooled.features())?.powi(2),
    };
    knn_graph(pooled.features(), hp.k_neighbors.min(m - 1), sigma2)
}

/// Runs the reweighting iterations from `W_0 = 0` on a prepared graph.
pub fn fit_pooled(pooled: &PooledDataset, graph: SimilarityGraph, hp: &LlrHyperparams) -> Result<FitResult> {
    hp.validate()?;
    if graph.len() != pooled.len() {
        return Err(Error::DimensionMismatch(format!(
            "graph has {} nodes, pooled data has {} samples",
            graph.len(),
            pooled.len()
        )));
    }
    let mut w = WeightMatrix::zeros(pooled.dim(), pooled.len());
    let mut current = objective(&w, pooled, &graph, hp)?;
    let mut trace = vec![current];
    let mut steps = Vec::new();
    let mut converged = false;

    for t in 0..hp.outer_max_iters {
        let cg = majorizer_cg(&w, &graph, hp.epsilon);
        let ce = majorizer_ce(&w, hp.epsilon);
        let surrogate = Surrogate::new(pooled, &cg, &ce, hp)?;
        let at_anchor = surrogate.value(&w)?;
        let (next, report) = solve_inner(pooled, &cg, &ce, hp, &w)?;
        let at_next = surrogate.value(&next)?;
        let value = objective(&next, pooled, &graph, hp)?;
        debug!(
            "outer {t}: J={value:.10e} inner_iters={} grad={:.2e}",
            report.iterations, report.grad_norm
        );
        if !next.is_finite() || value > current + 1e-8 * (1.0 + current.abs()) {
            return Err(Error::NonDecrease {
                iteration: t + 1,
                before: current,
                after: value,
            });
        }
        steps.push(OuterStep {
            surrogate_at_anchor: at_anchor,
            surrogate_at_next: at_next,
            inner_iterations: report.iterations,
        });
        trace.push(value);
        let change = (current - value).abs() / current.abs().max(f64::MIN_POSITIVE);
        w = next;
        current = value;
        if change < hp.outer_rel_tol {
            converged = true;
            break;
        }
    }

    Ok(FitResult {
        weights: w,
        iterations: trace.len() - 1,
        objective_trace: trace,
        steps,
        converged,
        graph,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::SimilarityGraph;
    use rand::{Rng, SeedableRng};

    fn hp(lambda1: f64, lambda2: f64) -> LlrHyperparams {
        LlrHyperparams {
            lambda1,
            lambda2,
            ..LlrHyperparams::default()
        }
    }

    fn random_pooled(d: usize, n_in: usize, n_test: usize, seed: u64) -> PooledDataset {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(d, n_in, |_, _| rng.random_range(-1.0..1.0));
        let b = DMatrix::from_fn(d, n_test, |k, _| rng.random_range(-1.0..1.0) + if k == 0 { 1.0 } else { 0.0 });
        pool(
            &Dataset::from_matrix(a, "i").unwrap(),
            &Dataset::from_matrix(b, "t").unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn hyperparams_validation() {
        assert!(LlrHyperparams::default().validate().is_ok());
        assert!(hp(-1.0, 1.0).validate().is_err());
        assert!(LlrHyperparams { epsilon: 0.0, ..Default::default() }.validate().is_err());
        assert!(LlrHyperparams { sigma2: Some(-1.0), ..Default::default() }.validate().is_err());
        assert!(LlrHyperparams { outer_max_iters: 0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn hyperparams_reject_unknown_keys() {
        let text = r#"{"lambda1":0.1,"lambda2":1,"k_neighbors":10,"sigma2":null,"epsilon":1e-10,
            "outer_max_iters":100,"outer_rel_tol":1e-6,"inner_max_iters":10,"inner_grad_tol":1e-6,"bogus":1}"#;
        assert!(serde_json::from_str::<LlrHyperparams>(text).is_err());
    }

    #[test]
    fn inner_solve_at_optimum_is_noop() {
        // lambda1 = lambda2 = 0 and x = 0 makes every W optimal
        let inl = Dataset::from_matrix(DMatrix::zeros(2, 2), "i").unwrap();
        let test = Dataset::from_matrix(DMatrix::zeros(2, 1), "t").unwrap();
        let p = pool(&inl, &test).unwrap();
        let w0 = WeightMatrix::new(DMatrix::from_element(2, 3, 0.25));
        let g = SimilarityGraph::empty(3);
        let h = hp(0.0, 0.0);
        let cg = majorizer_cg(&w0, &g, h.epsilon);
        let ce = majorizer_ce(&w0, h.epsilon);
        let (w, report) = solve_inner(&p, &cg, &ce, &h, &w0).unwrap();
        assert_eq!(report.iterations, 0);
        assert_eq!(w, w0);
    }

    #[test]
    fn heavy_exclusive_penalty_shrinks_to_zero() {
        let p = random_pooled(3, 4, 3, 1);
        let g = SimilarityGraph::empty(7);
        let h = hp(0.0, 1e6);
        let w0 = WeightMatrix::zeros(3, 7);
        let cg = majorizer_cg(&w0, &g, h.epsilon);
        let ce = majorizer_ce(&w0, h.epsilon);
        let (w, _) = solve_inner(&p, &cg, &ce, &h, &w0).unwrap();
        assert!(w.as_matrix().amax() < 1e-5);
        let value = Surrogate::new(&p, &cg, &ce, &h).unwrap().value(&w).unwrap();
        assert!((value - 7.0 * 2f64.ln()).abs() < 1e-5);
    }

    #[test]
    fn scalar_inner_problem_matches_bisection() {
        // one inlier at x = 2 and a far-away test point; lambda2 * c * w^2 with c fixed
        let inl = Dataset::from_matrix(DMatrix::from_element(1, 1, 2.0), "i").unwrap();
        let test = Dataset::from_matrix(DMatrix::from_element(1, 1, 0.0), "t").unwrap();
        let p = pool(&inl, &test).unwrap();
        let h = hp(0.0, 0.3);
        let c = 1.7;
        let ce = DMatrix::from_element(1, 2, c);
        let cg = majorizer_cg(&WeightMatrix::zeros(1, 2), &SimilarityGraph::empty(2), h.epsilon);
        let tight = LlrHyperparams {
            inner_grad_tol: 1e-12,
            ..h
        };
        let (w, _) = solve_inner(&p, &cg, &ce, &tight, &WeightMatrix::zeros(1, 2)).unwrap();
        // d/dw [log(1 + e^{-2w}) + 0.3 * 1.7 * w^2] = -2 sigmoid(-2w) + 1.02 w
        let deriv = |w: f64| -2.0 / (1.0 + (2.0 * w).exp()) + 2.0 * 0.3 * c * w;
        let (mut lo, mut hi) = (0.0, 10.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if deriv(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        assert!((w.as_matrix()[(0, 0)] - lo).abs() < 1e-6);
        assert!(w.as_matrix()[(0, 1)].abs() < 1e-9);
    }

    #[test]
    fn unregularized_fit_descends() {
        let inl = Dataset::from_matrix(DMatrix::from_element(1, 1, 1.0), "i").unwrap();
        let test = Dataset::from_matrix(DMatrix::from_element(1, 1, -1.0), "t").unwrap();
        let h = LlrHyperparams {
            inner_max_iters: 5,
            outer_max_iters: 10,
            ..hp(0.0, 0.0)
        };
        let fit = fit(&inl, &test, &h).unwrap();
        for pair in fit.objective_trace.windows(2) {
            assert!(pair[1] < pair[0]);
        }
        assert!(fit.weights.as_matrix()[(0, 0)] > 0.0);
        assert!(fit.weights.as_matrix()[(0, 1)] > 0.0);
    }

    #[test]
    fn trace_starts_at_log2_and_decreases() {
        let p = random_pooled(4, 12, 8, 3);
        let h = LlrHyperparams {
            k_neighbors: 3,
            ..hp(0.1, 1.0)
        };
        let g = build_graph(&p, &h).unwrap();
        let fit = fit_pooled(&p, g, &h).unwrap();
        let n = p.len() as f64;
        // the smoothed penalties add at most O(sqrt(eps)) at W = 0
        assert!((fit.objective_trace[0] - n * 2f64.ln()).abs() < 1e-3);
        assert_eq!(fit.objective_trace.len(), fit.iterations + 1);
        for pair in fit.objective_trace.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-8 * (1.0 + pair[0].abs()));
        }
        assert!(fit.converged);
    }

    #[test]
    fn fit_rejects_mismatched_graph() {
        let p = random_pooled(2, 3, 3, 4);
        assert!(fit_pooled(&p, SimilarityGraph::empty(5), &LlrHyperparams::default()).is_err());
    }
}
