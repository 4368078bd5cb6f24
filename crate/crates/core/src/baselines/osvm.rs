use nalgebra::{DMatrix, DVector};

use super::{check_width, gaussian_kernel, kernel_model_score, KernelKind, KernelModel};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::scores::ScoreSet;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OsvmOptions {
    pub max_iters: usize,
    /// Target for [`osvm_kkt_residual`].
    pub kkt_tol: f64,
}

impl Default for OsvmOptions {
    fn default() -> Self {
        OsvmOptions {
            max_iters: 100_000,
            kkt_tol: 1e-7,
        }
    }
}

/// Euclidean projection onto `{a : sum a = 1, 0 <= a <= upper}`.
///
/// Solves for the shift `theta` with `sum clip(v - theta, 0, upper) = 1` by
/// bisection, then spreads the remaining rounding error over the free
/// coordinates.
pub fn project_capped_simplex(v: &[f64], upper: f64) -> Vec<f64> {
    let n = v.len();
    assert!(n > 0 && upper * n as f64 >= 1.0 - 1e-12, "infeasible box");
    if upper * n as f64 <= 1.0 + 1e-12 {
        return vec![1.0 / n as f64; n];
    }
    let total = |theta: f64| v.iter().map(|x| (x - theta).clamp(0.0, upper)).sum::<f64>();
    let mut lo = v.iter().copied().fold(f64::INFINITY, f64::min) - upper;
    let mut hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if total(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let theta = 0.5 * (lo + hi);
    let mut a: Vec<f64> = v.iter().map(|x| (x - theta).clamp(0.0, upper)).collect();
    for _ in 0..4 {
        let gap = 1.0 - a.iter().sum::<f64>();
        let free: Vec<usize> = (0..n).filter(|&i| a[i] > 0.0 && a[i] < upper).collect();
        if gap == 0.0 || free.is_empty() {
            break;
        }
        let share = gap / free.len() as f64;
        for i in free {
            a[i] = (a[i] + share).clamp(0.0, upper);
        }
    }
    a
}

/// Dual objective `0.5 a^T K a`.
pub fn osvm_objective(gram: &DMatrix<f64>, alpha: &[f64]) -> f64 {
    let a = DVector::from_column_slice(alpha);
    0.5 * a.dot(&(gram * &a))
}

/// Projected-gradient stationarity residual `|a - P(a - grad)|_inf`.
pub fn osvm_kkt_residual(gram: &DMatrix<f64>, alpha: &[f64], upper: f64) -> f64 {
    let a = DVector::from_column_slice(alpha);
    let grad = gram * &a;
    let step: Vec<f64> = alpha.iter().zip(grad.iter()).map(|(x, g)| x - g).collect();
    let p = project_capped_simplex(&step, upper);
    p.iter().zip(alpha).map(|(p, a)| (p - a).abs()).fold(0.0, f64::max)
}

fn largest_eigenvalue(gram: &DMatrix<f64>) -> f64 {
    let n = gram.nrows();
    let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut lambda = 0.0;
    for _ in 0..100 {
        let w = gram * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = w / norm;
        if (norm - lambda).abs() <= 1e-10 * norm {
            return norm;
        }
        lambda = norm;
        v = next;
    }
    lambda
}

/// Accelerated projected gradient on the dual, starting from `start`.
pub(crate) fn solve_dual(gram: &DMatrix<f64>, upper: f64, start: Vec<f64>, opts: &OsvmOptions) -> Vec<f64> {
    let n = gram.nrows();
    if upper * n as f64 <= 1.0 + 1e-12 {
        return vec![1.0 / n as f64; n];
    }
    let lipschitz = largest_eigenvalue(gram).max(1e-12) * 1.01;
    let step = 1.0 / lipschitz;
    let mut x = project_capped_simplex(&start, upper);
    let mut y = x.clone();
    let mut t = 1.0f64;
    let mut f_prev = osvm_objective(gram, &x);
    for iter in 0..opts.max_iters {
        let grad = gram * DVector::from_column_slice(&y);
        let moved: Vec<f64> = y.iter().zip(grad.iter()).map(|(y, g)| y - step * g).collect();
        let next = project_capped_simplex(&moved, upper);
        let f_next = osvm_objective(gram, &next);
        if f_next > f_prev {
            // restart momentum
            t = 1.0;
            y = x.clone();
            continue;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let mom = (t - 1.0) / t_next;
        y = next.iter().zip(&x).map(|(a, b)| a + mom * (a - b)).collect();
        x = next;
        t = t_next;
        f_prev = f_next;
        if iter % 10 == 0 && osvm_kkt_residual(gram, &x, upper) <= opts.kkt_tol {
            break;
        }
    }
    x
}

/// One-class SVM dual: minimize `0.5 a^T K a` with `sum a = 1` and
/// `0 <= a <= 1 / (n nu)`, Gaussian kernel of width `sigma`.
pub fn osvm_fit(samples: &Dataset, nu: f64, sigma: f64, opts: &OsvmOptions) -> Result<KernelModel> {
    check_width("sigma", sigma)?;
    let n = samples.len();
    if !(nu > 0.0 && nu <= 1.0) {
        return Err(Error::InvalidParameter(format!("nu must be in (0, 1], got {nu}")));
    }
    let upper = 1.0 / (n as f64 * nu);
    if upper * (n as f64) < 1.0 - 1e-12 {
        return Err(Error::InfeasibleNu { nu, n });
    }
    let x = samples.features();
    let gram = gaussian_kernel(x, x, sigma);
    let alphas = solve_dual(&gram, upper, vec![1.0 / n as f64; n], opts);
    Ok(KernelModel {
        centers: x.clone(),
        alphas,
        sigma,
        kind: KernelKind::Osvm,
    })
}

/// Decision values `sum_k a_k k(x_k, x)`, without the offset.
pub fn osvm_score(model: &KernelModel, query: &Dataset) -> Result<ScoreSet> {
    kernel_model_score(model, query, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random(d: usize, m: usize, seed: u64) -> Dataset {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Dataset::from_matrix(DMatrix::from_fn(d, m, |_, _| rng.random_range(-1.0..1.0)), "s").unwrap()
    }

    #[test]
    fn nu_one_forces_uniform() {
        let data = random(2, 7, 1);
        let m = osvm_fit(&data, 1.0, 0.5, &OsvmOptions::default()).unwrap();
        assert!(m.alphas.iter().all(|&a| a == 1.0 / 7.0));
    }

    #[test]
    fn single_sample() {
        let data = random(3, 1, 2);
        let m = osvm_fit(&data, 0.5, 1.0, &OsvmOptions::default()).unwrap();
        assert_eq!(m.alphas, vec![1.0]);
        let s = osvm_score(&m, &data).unwrap();
        assert_eq!(s.scores(), &[1.0]);
    }

    #[test]
    fn projection_is_feasible() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let v: Vec<f64> = (0..20).map(|_| rng.random_range(-3.0..3.0)).collect();
            let upper = rng.random_range(0.06..1.0);
            let p = project_capped_simplex(&v, upper);
            assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            assert!(p.iter().all(|&a| (0.0..=upper).contains(&a)));
        }
    }

    #[test]
    fn multistart_agreement() {
        let data = random(2, 20, 4);
        let gram = gaussian_kernel(data.features(), data.features(), 0.7);
        let upper = 1.0 / (20.0 * 0.2);
        let opts = OsvmOptions {
            kkt_tol: 1e-10,
            ..OsvmOptions::default()
        };
        let model = osvm_fit(&data, 0.2, 0.7, &opts).unwrap();
        let best = osvm_objective(&gram, &model.alphas);
        assert!(osvm_kkt_residual(&gram, &model.alphas, upper) <= 1e-5);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let start: Vec<f64> = (0..20).map(|_| rng.random_range(0.0..1.0)).collect();
            let alt = solve_dual(&gram, upper, start, &opts);
            assert!((osvm_objective(&gram, &alt) - best).abs() < 1e-6);
        }
        let uniform = vec![1.0 / 20.0; 20];
        assert!(best <= osvm_objective(&gram, &uniform));
    }

    #[test]
    fn scores_bounded_by_one() {
        let data = random(2, 15, 6);
        let m = osvm_fit(&data, 0.3, 0.5, &OsvmOptions::default()).unwrap();
        assert!((m.alphas.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        let q = random(2, 10, 7);
        let s = osvm_score(&m, &q).unwrap();
        assert!(s.scores().iter().all(|&v| v > 0.0 && v <= 1.0 + 1e-12));
        let far = Dataset::from_matrix(DMatrix::from_element(2, 1, 50.0), "f").unwrap();
        assert!(osvm_score(&m, &far).unwrap().scores()[0] < 1e-100);
    }

    #[test]
    fn invalid_nu() {
        let data = random(2, 4, 8);
        assert!(osvm_fit(&data, 0.0, 1.0, &OsvmOptions::default()).is_err());
        assert!(osvm_fit(&data, 1.5, 1.0, &OsvmOptions::default()).is_err());
    }
}
