use nalgebra::DVector;

use super::{check_same_dim, check_width, choose_basis, gaussian_kernel, KernelKind, KernelModel};
use crate::data::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RulsifOptions {
    /// Weight of the test density in the denominator mixture; 1 is plain uLSIF.
    pub beta: f64,
    /// Ridge strength.
    pub nu: f64,
    pub sigma: f64,
    pub n_basis: usize,
    pub seed: u64,
}

impl RulsifOptions {
    /// uLSIF defaults (`beta = 1`, `nu = 0.1`).
    pub fn with_sigma(sigma: f64) -> Self {
        RulsifOptions {
            beta: 1.0,
            nu: 0.1,
            sigma,
            n_basis: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RulsifFit {
    pub model: KernelModel,
    /// `|(H + nu I) alpha - h|` of the returned solution.
    pub residual: f64,
    /// `|h|`, the scale the residual is judged against.
    pub rhs_norm: f64,
}

/// Least-squares fit of the relative ratio `p'(x) / ((1 - beta) p'(x) + beta p(x))`,
/// with `p'` the inlier density, `p` the test density, centers from the inliers.
///
/// Solves `(H + nu I) alpha = h` by Cholesky with one refinement step.
pub fn rulsif_fit(inliers: &Dataset, test: &Dataset, opts: &RulsifOptions) -> Result<RulsifFit> {
    check_same_dim(inliers, test)?;
    check_width("sigma", opts.sigma)?;
    if !(0.0..=1.0).contains(&opts.beta) {
        return Err(Error::InvalidParameter(format!("beta must be in [0, 1], got {}", opts.beta)));
    }
    if !(opts.nu >= 0.0 && opts.nu.is_finite()) {
        return Err(Error::InvalidParameter(format!("nu must be >= 0, got {}", opts.nu)));
    }
    if inliers.is_empty() || test.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    let basis = choose_basis(inliers.len(), opts.n_basis.max(1), opts.seed);
    let centers = inliers.select(&basis)?.features().clone();
    let b = centers.ncols();
    let ki = gaussian_kernel(inliers.features(), &centers, opts.sigma);
    let kt = gaussian_kernel(test.features(), &centers, opts.sigma);

    let mut h = ki.transpose() * &ki * ((1.0 - opts.beta) / inliers.len() as f64);
    h += kt.transpose() * &kt * (opts.beta / test.len() as f64);
    for l in 0..b {
        h[(l, l)] += opts.nu;
    }
    let rhs = DVector::from_iterator(b, ki.column_iter().map(|c| c.mean()));

    let chol = h.clone().cholesky().ok_or(Error::SingularSystem)?;
    let mut alpha = chol.solve(&rhs);
    let correction = chol.solve(&(&rhs - &h * &alpha));
    alpha += correction;
    let residual = (&h * &alpha - &rhs).norm();
    let rhs_norm = rhs.norm();
    if !alpha.iter().all(|v| v.is_finite()) || residual > 1e-8 * rhs_norm.max(f64::MIN_POSITIVE) {
        return Err(Error::SingularSystem);
    }

    Ok(RulsifFit {
        model: KernelModel {
            centers,
            alphas: alpha.iter().copied().collect(),
            sigma: opts.sigma,
            kind: KernelKind::Rulsif,
        },
        residual,
        rhs_norm,
    })
}
