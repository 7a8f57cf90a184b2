use crate::scalar::{norm_inf, Real};

use super::{LdlFactors, SparseSymMatrix};

/// Controls for Richardson iterative refinement.
#[derive(Debug, Clone, Copy)]
pub struct RefineOptions {
    pub max_steps: usize,
    /// Target `‖b − A x‖∞ / ‖b‖∞`.
    pub tol: f64,
    /// A step whose residual reduction factor exceeds this counts as slow.
    pub slow_ratio: f64,
    /// Consecutive slow steps before giving up.
    pub max_slow: usize,
}

impl Default for RefineOptions {
    fn default() -> Self {
        Self { max_steps: 10, tol: 1e-12, slow_ratio: 0.5, max_slow: 2 }
    }
}

#[derive(Debug, Clone)]
pub struct RefinedSolution<T> {
    pub x: Vec<T>,
    /// Achieved `‖b − A x‖∞ / max(‖b‖∞, tiny)`.
    pub residual: T,
    /// Absolute `‖b − A x‖∞`.
    pub residual_abs: T,
    /// Refinement steps attempted after the initial solve.
    pub steps: usize,
    pub converged: bool,
}

/// Solves `A x = b` with the factors of a (possibly perturbed) `A`, then
/// applies `x ← x + solve(b − A x)` until the relative residual reaches
/// `tol`, the residual stagnates, or `max_steps` is reached. A step that
/// increases the residual is discarded.
pub fn solve_refined<T: Real>(
    factors: &LdlFactors<T>,
    a: &SparseSymMatrix<T>,
    b: &[T],
    opts: &RefineOptions,
) -> RefinedSolution<T> {
    let n = b.len();
    let bnorm = norm_inf(b);
    let scale = if bnorm > T::zero() { bnorm } else { T::one() };
    let tol = T::lit(opts.tol);

    let mut x = factors.solve(b);
    let mut r = vec![T::zero(); n];
    let mut ax = vec![T::zero(); n];
    let residual = |x: &[T], ax: &mut [T], r: &mut [T]| -> T {
        a.mul_vec(x, ax);
        for i in 0..n {
            r[i] = b[i] - ax[i];
        }
        norm_inf(r)
    };
    let mut res = residual(&x, &mut ax, &mut r);
    if !res.is_finite() {
        return RefinedSolution { x, residual: res, residual_abs: res, steps: 0, converged: false };
    }
    let mut steps = 0;
    let mut slow = 0;
    let mut trial = vec![T::zero(); n];
    let mut r_trial = vec![T::zero(); n];
    while res / scale > tol && steps < opts.max_steps {
        steps += 1;
        let dx = factors.solve(&r);
        for i in 0..n {
            trial[i] = x[i] + dx[i];
        }
        let res_trial = residual(&trial, &mut ax, &mut r_trial);
        if !(res_trial < res) {
            break;
        }
        let ratio = res_trial / res;
        std::mem::swap(&mut x, &mut trial);
        std::mem::swap(&mut r, &mut r_trial);
        res = res_trial;
        if ratio > T::lit(opts.slow_ratio) {
            slow += 1;
            if slow >= opts.max_slow {
                break;
            }
        } else {
            slow = 0;
        }
    }
    RefinedSolution { x, residual: res / scale, residual_abs: res, steps, converged: res / scale <= tol }
}
