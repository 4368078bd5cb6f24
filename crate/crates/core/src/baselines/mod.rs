//! Comparison detectors.
//!
//! All of them return a [`ScoreSet`] where higher means more inlier-like:
//! densities for KDE, decision values for the one-class SVM, inverted LOF,
//! and inlier-over-test ratio estimates for the ratio methods.

mod kde;
mod kliep;
mod l1lr;
mod lof;
mod osvm;
mod rulsif;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use kde::kde_fit_score;
pub use kliep::{kliep_fit, KliepFit, KliepOptions};
pub use l1lr::{l1_optimality_residual, l1lr_fit, l1lr_lambda_max, l1lr_score, L1lrOptions, LinearModel};
pub use lof::{lof_score, lof_score_in_sample, lof_values};
pub use osvm::{osvm_fit, osvm_kkt_residual, osvm_objective, osvm_score, project_capped_simplex, OsvmOptions};
pub use rulsif::{rulsif_fit, RulsifFit, RulsifOptions};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::graph::sq_dist_between;
use crate::scores::ScoreSet;

/// Floor applied when a kernel score must stay positive.
pub const KERNEL_SCORE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Kliep,
    Rulsif,
    Osvm,
    Kde,
}

/// A weighted sum of Gaussian bumps, `sum_l alpha_l exp(-|x - c_l|^2 / (2 sigma^2))`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelModel {
    pub centers: DMatrix<f64>,
    pub alphas: Vec<f64>,
    pub sigma: f64,
    pub kind: KernelKind,
}

impl KernelModel {
    /// Raw model values at each query column.
    pub fn evaluate(&self, query: &DMatrix<f64>) -> Vec<f64> {
        let k = gaussian_kernel(query, &self.centers, self.sigma);
        (0..query.ncols())
            .map(|i| k.row(i).iter().zip(&self.alphas).map(|(kv, a)| kv * a).sum())
            .collect()
    }
}

/// Gram matrix `K[i, l] = exp(-|a_i - b_l|^2 / (2 sigma^2))` between columns.
pub fn gaussian_kernel(a: &DMatrix<f64>, b: &DMatrix<f64>, sigma: f64) -> DMatrix<f64> {
    let denom = 2.0 * sigma * sigma;
    DMatrix::from_fn(a.ncols(), b.ncols(), |i, l| (-sq_dist_between(a, i, b, l) / denom).exp())
}

/// Scores `sum_l alpha_l k(x, c_l)`. With `clamp_nonneg` the values are
/// floored at [`KERNEL_SCORE_FLOOR`] (least-squares fits can go negative);
/// otherwise only underflow to zero is guarded.
pub fn kernel_model_score(model: &KernelModel, query: &Dataset, clamp_nonneg: bool) -> Result<ScoreSet> {
    if query.dim() != model.centers.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "model has {} features, query has {}",
            model.centers.nrows(),
            query.dim()
        )));
    }
    let floor = if clamp_nonneg {
        KERNEL_SCORE_FLOOR
    } else {
        f64::MIN_POSITIVE
    };
    let values = model.evaluate(query.features());
    if values.iter().any(|v| !v.is_finite()) || (!clamp_nonneg && values.iter().any(|&v| v < 0.0)) {
        return Err(Error::InvalidData("kernel model produced invalid scores".into()));
    }
    let scores = values.into_iter().map(|v| v.max(floor)).collect();
    ScoreSet::new(query.sample_ids().to_vec(), scores, None)
}

pub(crate) fn check_same_dim(a: &Dataset, b: &Dataset) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch(format!(
            "{} vs {} features",
            a.dim(),
            b.dim()
        )));
    }
    Ok(())
}

pub(crate) fn check_width(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::InvalidParameter(format!("{name} must be > 0, got {v}")));
    }
    Ok(())
}

/// Seeded choice of `min(b, m)` basis columns, returned in increasing order.
pub(crate) fn choose_basis(m: usize, b: usize, seed: u64) -> Vec<usize> {
    use rand::SeedableRng;
    if b >= m {
        return (0..m).collect();
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, m, b).into_vec();
    idx.sort_unstable();
    idx
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(alphas: Vec<f64>) -> KernelModel {
        KernelModel {
            centers: DMatrix::from_column_slice(1, alphas.len(), &[0.0, 3.0][..alphas.len()]),
            alphas,
            sigma: 1.0,
            kind: KernelKind::Rulsif,
        }
    }

    fn query(points: &[f64]) -> Dataset {
        Dataset::from_matrix(DMatrix::from_row_slice(1, points.len(), points), "q").unwrap()
    }

    #[test]
    fn zero_alphas_hit_the_floor() {
        let s = kernel_model_score(&model(vec![0.0, 0.0]), &query(&[0.0, 1.0]), true).unwrap();
        assert_eq!(s.scores(), &[KERNEL_SCORE_FLOOR, KERNEL_SCORE_FLOOR]);
    }

    #[test]
    fn single_center_at_query() {
        let s = kernel_model_score(&model(vec![0.7]), &query(&[0.0]), false).unwrap();
        assert_eq!(s.scores(), &[0.7]);
    }

    #[test]
    fn additive_in_alpha() {
        let q = query(&[0.3, -1.0, 2.5]);
        let a = model(vec![0.2, 0.5]).evaluate(q.features());
        let b = model(vec![0.1, 0.4]).evaluate(q.features());
        let ab = model(vec![0.3, 0.9]).evaluate(q.features());
        for i in 0..3 {
            assert!((a[i] + b[i] - ab[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn negative_values_clamped() {
        let s = kernel_model_score(&model(vec![-1.0, 0.0]), &query(&[0.0]), true).unwrap();
        assert_eq!(s.scores(), &[KERNEL_SCORE_FLOOR]);
        assert!(kernel_model_score(&model(vec![-1.0, 0.0]), &query(&[0.0]), false).is_err());
    }

    #[test]
    fn basis_choice_is_seeded() {
        assert_eq!(choose_basis(5, 10, 1), vec![0, 1, 2, 3, 4]);
        let a = choose_basis(200, 100, 9);
        assert_eq!(a, choose_basis(200, 100, 9));
        assert_eq!(a.len(), 100);
        assert!(a.windows(2).all(|w| w[0] < w[1]));
    }
}
