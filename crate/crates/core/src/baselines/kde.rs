use std::f64::consts::PI;

use super::{check_same_dim, check_width};
use crate::data::Dataset;
use crate::error::Result;
use crate::graph::sq_dist_between;
use crate::scores::ScoreSet;

/// Gaussian kernel density of the inliers, evaluated at each query sample.
///
/// Computed in log space so that high dimensions neither overflow the
/// normalizer nor underflow the kernel sum; densities below the smallest
/// normal float are reported as that float.
pub fn kde_fit_score(inliers: &Dataset, query: &Dataset, sigma: f64) -> Result<ScoreSet> {
    check_same_dim(inliers, query)?;
    check_width("sigma", sigma)?;
    let n = inliers.len() as f64;
    let d = inliers.dim() as f64;
    let log_norm = -n.ln() - 0.5 * d * (2.0 * PI * sigma * sigma).ln();
    let denom = 2.0 * sigma * sigma;
    let (xs, qs) = (inliers.features(), query.features());
    let scores = (0..query.len())
        .map(|q| {
            let logs: Vec<f64> = (0..inliers.len())
                .map(|k| -sq_dist_between(qs, q, xs, k) / denom)
                .collect();
            let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + logs.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
            (log_norm + lse).exp().max(f64::MIN_POSITIVE)
        })
        .collect();
    ScoreSet::new(query.sample_ids().to_vec(), scores, None)
}
