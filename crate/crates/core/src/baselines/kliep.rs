use nalgebra::{DMatrix, DVector};

use super::{check_same_dim, check_width, choose_basis, gaussian_kernel, KernelKind, KernelModel};
use crate::data::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KliepOptions {
    /// Kernel width of the basis functions.
    pub sigma: f64,
    pub n_basis: usize,
    pub seed: u64,
    pub max_iters: usize,
    /// Relative objective change below which ascent stops.
    pub tol: f64,
}

impl KliepOptions {
    pub fn with_sigma(sigma: f64) -> Self {
        KliepOptions {
            sigma,
            n_basis: 100,
            seed: 0,
            max_iters: 5000,
            tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KliepFit {
    pub model: KernelModel,
    /// Objective after each accepted step; nondecreasing.
    pub objective_trace: Vec<f64>,
}

fn log_likelihood(a: &DMatrix<f64>, alpha: &DVector<f64>) -> f64 {
    (a * alpha).iter().map(|v| v.max(f64::MIN_POSITIVE).ln()).sum()
}

/// Feasibility step: move onto `b^T alpha = 1`, clip at zero, renormalize.
fn make_feasible(alpha: &mut DVector<f64>, b: &DVector<f64>) -> Result<()> {
    let bb = b.dot(b);
    let shift = (1.0 - b.dot(alpha)) / bb;
    alpha.axpy(shift, b, 1.0);
    alpha.iter_mut().for_each(|v| *v = v.max(0.0));
    let mass = b.dot(alpha);
    if !(mass > 0.0) {
        return Err(Error::AllZeroAlphas);
    }
    *alpha /= mass;
    Ok(())
}

/// Inlier-over-test ratio `r(x) = sum_l alpha_l k(x, c_l)` with centers drawn
/// from the inliers: maximizes `sum_inliers log r` subject to
/// `mean_test r = 1` and `alpha >= 0`.
///
/// Alternates gradient ascent with the feasibility step; a step is kept only
/// if it raises the objective, otherwise the step size is halved.
pub fn kliep_fit(inliers: &Dataset, test: &Dataset, opts: &KliepOptions) -> Result<KliepFit> {
    check_same_dim(inliers, test)?;
    check_width("sigma", opts.sigma)?;
    if inliers.is_empty() || test.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    let basis = choose_basis(inliers.len(), opts.n_basis.max(1), opts.seed);
    let centers = inliers.select(&basis)?.features().clone();
    let a = gaussian_kernel(inliers.features(), &centers, opts.sigma);
    let kt = gaussian_kernel(test.features(), &centers, opts.sigma);
    let b = DVector::from_iterator(centers.ncols(), kt.column_iter().map(|c| c.mean()));

    let mut alpha = DVector::from_element(centers.ncols(), 1.0);
    make_feasible(&mut alpha, &b)?;
    let mut value = log_likelihood(&a, &alpha);
    let mut trace = vec![value];
    let mut step = 1e-3 * centers.ncols() as f64 / inliers.len() as f64;

    for _ in 0..opts.max_iters {
        let fitted = &a * &alpha;
        let inv = fitted.map(|v| 1.0 / v.max(f64::MIN_POSITIVE));
        let grad = a.transpose() * inv;
        let mut accepted = false;
        while step > 1e-14 {
            let mut cand = &alpha + &grad * step;
            if make_feasible(&mut cand, &b).is_ok() {
                let cand_value = log_likelihood(&a, &cand);
                if cand_value >= value {
                    let gain = cand_value - value;
                    alpha = cand;
                    value = cand_value;
                    trace.push(value);
                    accepted = gain > opts.tol * (1.0 + value.abs());
                    step *= 2.0;
                    break;
                }
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }

    Ok(KliepFit {
        model: KernelModel {
            centers,
            alphas: alpha.iter().copied().collect(),
            sigma: opts.sigma,
            kind: KernelKind::Kliep,
        },
        objective_trace: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random(d: usize, m: usize, shift: f64, seed: u64, prefix: &str) -> Dataset {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Dataset::from_matrix(DMatrix::from_fn(d, m, |_, _| rng.random_range(-1.0..1.0) + shift), prefix).unwrap()
    }

    #[test]
    fn constraint_and_nonnegativity() {
        let inl = random(2, 60, 0.0, 1, "i");
        let test = random(2, 40, 0.5, 2, "t");
        let fit = kliep_fit(&inl, &test, &KliepOptions::with_sigma(0.6)).unwrap();
        let r = fit.model.evaluate(test.features());
        let mean = r.iter().sum::<f64>() / r.len() as f64;
        assert!((mean - 1.0).abs() <= 1e-6, "{mean}");
        assert!(fit.model.alphas.iter().all(|&a| a >= 0.0));
        assert!(fit.objective_trace.windows(2).all(|w| w[1] >= w[0]));
        assert!(fit.objective_trace.len() > 2);
    }

    #[test]
    fn single_basis_identical_samples() {
        let inl = random(1, 50, 0.0, 3, "i");
        let test = Dataset::from_matrix(inl.features().clone(), "t").unwrap();
        let opts = KliepOptions {
            n_basis: 1,
            ..KliepOptions::with_sigma(10.0)
        };
        let fit = kliep_fit(&inl, &test, &opts).unwrap();
        // one basis: alpha is fixed by the constraint alone
        let k: Vec<f64> = gaussian_kernel(test.features(), &fit.model.centers, 10.0).iter().copied().collect();
        let closed = 1.0 / (k.iter().sum::<f64>() / k.len() as f64);
        assert!((fit.model.alphas[0] - closed).abs() <= 1e-9 * closed);
        for r in fit.model.evaluate(test.features()) {
            assert!((r - 1.0).abs() <= 0.1, "{r}");
        }
    }

    #[test]
    fn higher_ratio_on_inlier_region() {
        let inl = random(1, 80, 0.0, 4, "i");
        let test = random(1, 80, 2.0, 5, "t");
        let fit = kliep_fit(&inl, &test, &KliepOptions::with_sigma(0.5)).unwrap();
        let q = Dataset::from_matrix(DMatrix::from_row_slice(1, 2, &[0.0, 2.5]), "q").unwrap();
        let r = fit.model.evaluate(q.features());
        assert!(r[0] > r[1]);
    }
}
