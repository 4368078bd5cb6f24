//! Nonlinear conjugate gradient with a backtracking Armijo line search.
//!
//! Polak–Ribière+ directions, optionally preconditioned by a fixed positive
//! diagonal, restarted along steepest descent whenever the conjugate
//! direction fails to descend.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NcgOptions {
    pub max_iters: usize,
    /// Stop once `|grad| <= grad_tol * (1 + |f|)`.
    pub grad_tol: f64,
    /// Sufficient-decrease constant of the Armijo condition.
    pub armijo_c1: f64,
    pub max_backtracks: usize,
}

impl Default for NcgOptions {
    fn default() -> Self {
        NcgOptions {
            max_iters: 1000,
            grad_tol: 1e-6,
            armijo_c1: 1e-4,
            max_backtracks: 60,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NcgReport {
    pub iterations: usize,
    pub evaluations: usize,
    pub value: f64,
    pub grad_norm: f64,
    pub converged: bool,
    /// The line search could not resolve a decrease above rounding noise.
    pub stalled: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Minimizes `f` starting from `x`, overwriting `x` with the final iterate.
///
/// `f(x, grad)` returns the value at `x` and writes the gradient into `grad`.
/// `inv_diag`, when given, is the inverse of a positive diagonal
/// preconditioner. The returned iterate never has a larger value than the
/// starting point.
pub fn minimize<F>(x: &mut [f64], mut f: F, inv_diag: Option<&[f64]>, opts: &NcgOptions) -> Result<NcgReport>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x.len();
    if let Some(p) = inv_diag {
        assert_eq!(p.len(), n, "preconditioner length");
    }
    let precondition = |g: &[f64], z: &mut [f64]| match inv_diag {
        Some(p) => z.iter_mut().zip(g).zip(p).for_each(|((z, g), p)| *z = g * p),
        None => z.copy_from_slice(g),
    };

    let mut grad = vec![0.0; n];
    let mut value = f(x, &mut grad);
    let mut evaluations = 1;
    let mut z = vec![0.0; n];
    precondition(&grad, &mut z);
    let mut dir: Vec<f64> = z.iter().map(|v| -v).collect();
    let mut prev_value = f64::NAN;
    let mut trial = vec![0.0; n];
    let mut trial_grad = vec![0.0; n];
    let mut best = vec![0.0; n];
    let mut best_grad = vec![0.0; n];
    let mut new_z = vec![0.0; n];

    let mut report = NcgReport {
        iterations: 0,
        evaluations,
        value,
        grad_norm: norm(&grad),
        converged: false,
        stalled: false,
    };

    for iter in 0..opts.max_iters {
        report.iterations = iter;
        report.grad_norm = norm(&grad);
        report.value = value;
        if report.grad_norm <= opts.grad_tol * (1.0 + value.abs()) {
            report.converged = true;
            report.evaluations = evaluations;
            return Ok(report);
        }

        let mut slope = dot(&grad, &dir);
        if !(slope < 0.0) {
            // restart along preconditioned steepest descent
            dir.iter_mut().zip(&z).for_each(|(d, z)| *d = -z);
            slope = dot(&grad, &dir);
        }

        let mut step = if prev_value.is_finite() && prev_value > value {
            (1.01 * 2.0 * (value - prev_value) / slope).min(1.0)
        } else {
            1.0 / norm(&dir).max(1.0)
        };
        if !(step > 0.0 && step.is_finite()) {
            step = 1.0;
        }

        // Armijo backtracking with quadratic interpolation
        let mut accepted: Option<(f64, f64)> = None;
        for _ in 0..opts.max_backtracks {
            trial.iter_mut().zip(x.iter()).zip(&dir).for_each(|((t, x), d)| *t = x + step * d);
            let fv = f(&trial, &mut trial_grad);
            evaluations += 1;
            if fv.is_finite() && fv <= value + opts.armijo_c1 * step * slope {
                accepted = Some((step, fv));
                break;
            }
            let next = if fv.is_finite() {
                let denom = 2.0 * (fv - value - slope * step);
                if denom > 0.0 {
                    -slope * step * step / denom
                } else {
                    0.5 * step
                }
            } else {
                0.1 * step
            };
            step = next.clamp(0.1 * step, 0.5 * step);
        }

        let Some((mut step, mut new_value)) = accepted else {
            let resolvable = opts.armijo_c1 * step * slope.abs();
            if resolvable <= 64.0 * f64::EPSILON * (1.0 + value.abs()) {
                report.stalled = true;
                report.evaluations = evaluations;
                return Ok(report);
            }
            return Err(Error::LineSearchFailure {
                grad_norm: report.grad_norm,
            });
        };
        best.copy_from_slice(&trial);
        best_grad.copy_from_slice(&trial_grad);

        // one interpolation refinement towards the line minimizer
        let curvature = new_value - value - slope * step;
        if curvature > 0.0 {
            let guess = -slope * step * step / (2.0 * curvature);
            if guess.is_finite() && (guess - step).abs() > 0.1 * step && guess < 10.0 * step {
                trial.iter_mut().zip(x.iter()).zip(&dir).for_each(|((t, x), d)| *t = x + guess * d);
                let fv = f(&trial, &mut trial_grad);
                evaluations += 1;
                if fv.is_finite() && fv < new_value {
                    step = guess;
                    new_value = fv;
                    best.copy_from_slice(&trial);
                    best_grad.copy_from_slice(&trial_grad);
                }
            }
        }
        let _ = step;

        x.copy_from_slice(&best);
        precondition(&best_grad, &mut new_z);
        // Polak–Ribière+ on the preconditioned residuals
        let denom = dot(&z, &grad);
        let beta = if denom > 0.0 {
            let num: f64 = new_z
                .iter()
                .zip(&best_grad)
                .zip(&grad)
                .map(|((z, g1), g0)| z * (g1 - g0))
                .sum();
            (num / denom).max(0.0)
        } else {
            0.0
        };
        dir.iter_mut().zip(&new_z).for_each(|(d, z)| *d = -z + beta * *d);
        grad.copy_from_slice(&best_grad);
        z.copy_from_slice(&new_z);
        prev_value = value;
        value = new_value;
    }

    report.iterations = opts.max_iters;
    report.value = value;
    report.grad_norm = norm(&grad);
    report.converged = report.grad_norm <= opts.grad_tol * (1.0 + value.abs());
    report.evaluations = evaluations;
    Ok(report)
}
