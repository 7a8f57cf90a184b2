//! Inner interior-point solver for one NCL subproblem
//!
//! ```text
//! min  f(x) + y_kᵀr + ½ρ‖r‖²   s.t.  c(x) + r = 0,  ℓ ≤ x ≤ u
//! ```
//!
//! at a fixed barrier parameter `μ`. Newton steps come from [`crate::kkt`],
//! globalized by fraction-to-boundary and a filter line search; the solve
//! stops as soon as the barrier residual satisfies `‖F(w)‖∞ ≤ ω`.

mod filter;

use std::fmt;

use thiserror::Error;

use crate::kkt::{KktData, KktError, KktFormulation, KktOptions, KktSolver, LinearStats, NewtonStep};
use crate::model::NlpView;

pub use filter::Filter;

/// Primal-dual point `w = (x, r, y, z_l, z_u)`. Bound multipliers are zero on
/// absent bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct Iterate {
    pub x: Vec<f64>,
    pub r: Vec<f64>,
    pub y: Vec<f64>,
    pub z_l: Vec<f64>,
    pub z_u: Vec<f64>,
}

impl Iterate {
    /// Starting point: `x₀` pushed into the interior, `r = 0`, given `y`,
    /// and `z = μ/gap` on finite bounds.
    pub fn initial(lower: &[f64], upper: &[f64], x0: &[f64], y: Vec<f64>, mu: f64) -> Self {
        let m = y.len();
        let x = push_interior(lower, upper, x0, 1e-2);
        let mut w = Self { x, r: vec![0.0; m], y, z_l: vec![0.0; lower.len()], z_u: vec![0.0; lower.len()] };
        for i in 0..lower.len() {
            if lower[i].is_finite() {
                w.z_l[i] = mu / (w.x[i] - lower[i]);
            }
            if upper[i].is_finite() {
                w.z_u[i] = mu / (upper[i] - w.x[i]);
            }
        }
        w
    }

    pub fn is_interior(&self, lower: &[f64], upper: &[f64]) -> bool {
        (0..self.x.len()).all(|i| {
            let ok_l = !lower[i].is_finite() || (self.x[i] > lower[i] && self.z_l[i] > 0.0);
            let ok_u = !upper[i].is_finite() || (self.x[i] < upper[i] && self.z_u[i] > 0.0);
            ok_l && ok_u && self.z_l[i].is_finite() && self.z_u[i].is_finite()
        })
    }

    /// `w + (α_p Δx, α_p Δr, α_p Δy, α_d Δz_l, α_d Δz_u)`.
    pub fn stepped(&self, d: &NewtonStep, alpha_p: f64, alpha_d: f64) -> Self {
        let add = |a: &[f64], b: &[f64], t: f64| -> Vec<f64> { a.iter().zip(b).map(|(u, v)| u + t * v).collect() };
        Self {
            x: add(&self.x, &d.dx, alpha_p),
            r: add(&self.r, &d.dr, alpha_p),
            y: add(&self.y, &d.dy, alpha_p),
            z_l: add(&self.z_l, &d.dz_l, alpha_d),
            z_u: add(&self.z_u, &d.dz_u, alpha_d),
        }
    }

    /// Keeps each multiplier within `[μ/(κ·gap), κμ/gap]`.
    pub fn clip_multipliers(&mut self, lower: &[f64], upper: &[f64], mu: f64, kappa: f64) {
        for i in 0..self.x.len() {
            if lower[i].is_finite() {
                let g = self.x[i] - lower[i];
                self.z_l[i] = self.z_l[i].clamp(mu / (kappa * g), kappa * mu / g);
            }
            if upper[i].is_finite() {
                let g = upper[i] - self.x[i];
                self.z_u[i] = self.z_u[i].clamp(mu / (kappa * g), kappa * mu / g);
            }
        }
    }
}

/// Projects onto `[ℓ + p_ℓ, u − p_u]` with `p = min(κ·max(1,|b|), κ(u−ℓ))`.
pub fn push_interior(lower: &[f64], upper: &[f64], x0: &[f64], kappa: f64) -> Vec<f64> {
    x0.iter()
        .enumerate()
        .map(|(i, &v)| {
            let (l, u) = (lower[i], upper[i]);
            let width = u - l;
            let mut x = v;
            if l.is_finite() {
                let p = (kappa * l.abs().max(1.0)).min(if width.is_finite() { kappa * width } else { f64::INFINITY });
                x = x.max(l + p);
            }
            if u.is_finite() {
                let p = (kappa * u.abs().max(1.0)).min(if width.is_finite() { kappa * width } else { f64::INFINITY });
                x = x.min(u - p);
            }
            x
        })
        .collect()
}

/// Parameters of one subproblem.
#[derive(Debug, Clone, Copy)]
pub struct Subproblem<'a> {
    pub rho: f64,
    pub mu: f64,
    pub y_k: &'a [f64],
}

/// The five blocks of `F(w)`. Complementarity entries of absent bounds are 0.
#[derive(Debug, Clone, PartialEq)]
pub struct BarrierResidual {
    /// `∇f − Jᵀy − z_l + z_u`
    pub stationarity: Vec<f64>,
    /// `y_k + ρr − y`
    pub penalty: Vec<f64>,
    /// `c + r`
    pub primal: Vec<f64>,
    /// `Z_l(x−ℓ) − μe`
    pub compl_l: Vec<f64>,
    /// `Z_u(u−x) − μe`
    pub compl_u: Vec<f64>,
}

impl BarrierResidual {
    pub fn block_norms(&self) -> [f64; 5] {
        let n = |v: &[f64]| v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        [n(&self.stationarity), n(&self.penalty), n(&self.primal), n(&self.compl_l), n(&self.compl_u)]
    }

    pub fn norm(&self) -> f64 {
        self.block_norms().iter().fold(0.0f64, |a, &b| a.max(b))
    }

    fn norm2_sq(&self) -> f64 {
        [&self.stationarity, &self.penalty, &self.primal, &self.compl_l, &self.compl_u]
            .iter()
            .flat_map(|v| v.iter())
            .map(|x| x * x)
            .sum()
    }
}

/// Function and first-derivative values at one `x`.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub f: f64,
    pub grad: Vec<f64>,
    pub c: Vec<f64>,
    pub jac: Vec<f64>,
}

impl Evaluation {
    pub fn at(view: &mut NlpView, x: &[f64]) -> Self {
        let mut grad = vec![0.0; view.n()];
        let mut c = vec![0.0; view.m()];
        let mut jac = vec![0.0; view.jac_col().len()];
        let f = view.gradient(x, &mut grad);
        view.constraints(x, &mut c);
        view.jacobian(x, &mut jac);
        Self { f, grad, c, jac }
    }

    pub fn is_finite(&self) -> bool {
        self.f.is_finite() && self.grad.iter().chain(&self.c).chain(&self.jac).all(|v| v.is_finite())
    }
}

/// `F(w)` from precomputed derivatives.
pub fn residual_at(view: &NlpView, ev: &Evaluation, w: &Iterate, sub: &Subproblem) -> BarrierResidual {
    let (n, m) = (view.n(), view.m());
    let (lower, upper) = (view.lower(), view.upper());
    let mut st = ev.grad.clone();
    let (rp, cols) = (view.jac_row_ptr(), view.jac_col());
    for i in 0..m {
        for k in rp[i]..rp[i + 1] {
            st[cols[k]] -= ev.jac[k] * w.y[i];
        }
    }
    let mut cl = vec![0.0; n];
    let mut cu = vec![0.0; n];
    for i in 0..n {
        st[i] += w.z_u[i] - w.z_l[i];
        if lower[i].is_finite() {
            cl[i] = w.z_l[i] * (w.x[i] - lower[i]) - sub.mu;
        }
        if upper[i].is_finite() {
            cu[i] = w.z_u[i] * (upper[i] - w.x[i]) - sub.mu;
        }
    }
    BarrierResidual {
        stationarity: st,
        penalty: (0..m).map(|i| sub.y_k[i] + sub.rho * w.r[i] - w.y[i]).collect(),
        primal: (0..m).map(|i| ev.c[i] + w.r[i]).collect(),
        compl_l: cl,
        compl_u: cu,
    }
}

/// Evaluates `F(w)` from scratch.
pub fn residual(view: &mut NlpView, w: &Iterate, sub: &Subproblem) -> BarrierResidual {
    let ev = Evaluation::at(view, &w.x);
    residual_at(view, &ev, w, sub)
}

/// Largest `(α_p, α_d) ∈ (0,1]²` keeping gaps above `(1−τ)` of their current
/// values and bound multipliers above `(1−τ)z`.
pub fn fraction_to_boundary(lower: &[f64], upper: &[f64], w: &Iterate, d: &NewtonStep, tau: f64) -> (f64, f64) {
    let mut ap = 1.0f64;
    let mut ad = 1.0f64;
    for i in 0..w.x.len() {
        if lower[i].is_finite() {
            if d.dx[i] < 0.0 {
                ap = ap.min(-tau * (w.x[i] - lower[i]) / d.dx[i]);
            }
            if d.dz_l[i] < 0.0 {
                ad = ad.min(-tau * w.z_l[i] / d.dz_l[i]);
            }
        }
        if upper[i].is_finite() {
            if d.dx[i] > 0.0 {
                ap = ap.min(tau * (upper[i] - w.x[i]) / d.dx[i]);
            }
            if d.dz_u[i] < 0.0 {
                ad = ad.min(-tau * w.z_u[i] / d.dz_u[i]);
            }
        }
    }
    (ap, ad)
}

/// `τ = max(0.99, 1 − μ)`.
pub fn ftb_tau(mu: f64) -> f64 {
    0.99f64.max(1.0 - mu)
}

#[derive(Debug, Clone)]
pub struct InnerOptions {
    pub max_backtracks: usize,
    pub kappa_sigma: f64,
    pub armijo: f64,
}

impl Default for InnerOptions {
    fn default() -> Self {
        Self { max_backtracks: 30, kappa_sigma: 1e10, armijo: 1e-4 }
    }
}

/// One inner iteration as seen by loggers.
#[derive(Debug, Clone)]
pub struct InnerLog {
    pub iteration: usize,
    /// Block norms of `F` before the step.
    pub residual: [f64; 5],
    pub objective: f64,
    pub alpha_primal: f64,
    pub alpha_dual: f64,
    pub backtracks: usize,
    pub delta: f64,
    pub factorizations: usize,
    pub refinement_steps: usize,
    pub perturbed_pivots: usize,
    /// Set for the outer loop's extrapolation step.
    pub extrapolation: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerReport {
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum InnerError {
    #[error("iteration budget exhausted after {iterations} iterations (‖F‖ = {residual:e})")]
    BudgetExhausted { iterations: usize, residual: f64 },
    #[error("Newton step failed at iteration {iterations}: {source}")]
    StepFailure { iterations: usize, residual: f64, source: KktError },
    #[error("line search failed at iteration {iterations} (‖F‖ = {residual:e})")]
    LineSearchFailure { iterations: usize, residual: f64 },
    #[error("function evaluation is not finite at the current iterate")]
    NonFinite { iterations: usize, residual: f64 },
}

impl InnerError {
    pub fn iterations(&self) -> usize {
        match *self {
            InnerError::BudgetExhausted { iterations, .. }
            | InnerError::StepFailure { iterations, .. }
            | InnerError::LineSearchFailure { iterations, .. }
            | InnerError::NonFinite { iterations, .. } => iterations,
        }
    }
}

/// Newton step generator and subproblem solver. Holds the KKT solver so that
/// its symbolic analysis and regularization history carry across subproblems.
#[derive(Debug, Clone)]
pub struct InnerSolver {
    kkt: KktSolver,
    pub opts: InnerOptions,
    hess: Vec<f64>,
}

impl InnerSolver {
    pub fn new(form: KktFormulation, kkt_opts: KktOptions, opts: InnerOptions) -> Self {
        Self { kkt: KktSolver::new(form, kkt_opts), opts, hess: Vec::new() }
    }

    pub fn formulation(&self) -> KktFormulation {
        self.kkt.form
    }

    pub fn linear_stats(&self) -> LinearStats {
        self.kkt.stats()
    }

    /// Newton step for `F(w) = 0` at `w`, with derivatives `ev` at `w.x`.
    pub fn newton_step(
        &mut self,
        view: &mut NlpView,
        ev: &Evaluation,
        w: &Iterate,
        sub: &Subproblem,
    ) -> Result<NewtonStep, KktError> {
        self.hess.resize(view.hess_row().len(), 0.0);
        view.hessian(&w.x, &w.y, &mut self.hess);
        let data = KktData {
            n_t: view.n_t(),
            m_eq: view.m_eq(),
            x: &w.x,
            lower: view.lower(),
            upper: view.upper(),
            r: &w.r,
            y: &w.y,
            z_l: &w.z_l,
            z_u: &w.z_u,
            y_k: sub.y_k,
            rho: sub.rho,
            mu: sub.mu,
            grad: &ev.grad,
            c: &ev.c,
            jac_row_ptr: view.jac_row_ptr(),
            jac_col: view.jac_col(),
            jac_val: &ev.jac,
            hess_col_ptr: view.hess_col_ptr(),
            hess_row: view.hess_row(),
            hess_val: &self.hess,
        };
        self.kkt.solve(&data)
    }

    /// Runs Newton iterations from `w` until `‖F(w)‖∞ ≤ ω` or `budget`
    /// iterations. On failure `w` holds the iterate with the smallest
    /// residual seen.
    pub fn solve(
        &mut self,
        view: &mut NlpView,
        w: &mut Iterate,
        sub: &Subproblem,
        omega: f64,
        budget: usize,
        log: &mut dyn FnMut(&InnerLog),
    ) -> Result<InnerReport, InnerError> {
        let mut ev = Evaluation::at(view, &w.x);
        let mut res = residual_at(view, &ev, w, sub);
        let mut fnorm = res.norm();
        if !ev.is_finite() || !fnorm.is_finite() {
            return Err(InnerError::NonFinite { iterations: 0, residual: fnorm });
        }
        let mut best = (fnorm, w.clone());
        let theta0 = primal_violation(&ev.c, &w.r);
        let mut filter = Filter::new(theta0);
        let tau = ftb_tau(sub.mu);
        let mut iter = 0;

        loop {
            if fnorm <= omega {
                return Ok(InnerReport { iterations: iter, residual: fnorm });
            }
            let restore = |w: &mut Iterate, best: (f64, Iterate)| {
                *w = best.1;
                best.0
            };
            if iter >= budget {
                let residual = restore(w, best);
                return Err(InnerError::BudgetExhausted { iterations: iter, residual });
            }
            let d = match self.newton_step(view, &ev, w, sub) {
                Ok(d) => d,
                Err(source) => {
                    let residual = restore(w, best);
                    return Err(InnerError::StepFailure { iterations: iter, residual, source });
                }
            };
            iter += 1;
            let (lower, upper) = (view.lower().to_vec(), view.upper().to_vec());
            let (ap_max, ad) = fraction_to_boundary(&lower, &upper, w, &d, tau);

            let phi = barrier_objective(ev.f, w, sub, &lower, &upper);
            let theta = primal_violation(&ev.c, &w.r);
            let slope = barrier_slope(&ev.grad, w, &d, sub, &lower, &upper);
            let f2 = res.norm2_sq();

            let mut alpha = ap_max;
            let mut accepted = None;
            let mut backtracks = 0;
            for j in 0..=self.opts.max_backtracks {
                let mut trial = w.stepped(&d, alpha, ad);
                let tf = view.objective(&trial.x);
                let mut tc = vec![0.0; view.m()];
                view.constraints(&trial.x, &mut tc);
                if tf.is_finite() && tc.iter().all(|v| v.is_finite()) {
                    let tphi = barrier_objective(tf, &trial, sub, &lower, &upper);
                    let ttheta = primal_violation(&tc, &trial.r);
                    if filter.accept(theta, phi, ttheta, tphi, alpha, slope, self.opts.armijo) {
                        trial.clip_multipliers(&lower, &upper, sub.mu, self.opts.kappa_sigma);
                        accepted = Some((trial, None));
                        backtracks = j;
                        break;
                    }
                    // fallback merit: the full residual
                    let tev = Evaluation::at(view, &trial.x);
                    if tev.is_finite() {
                        let tres = residual_at(view, &tev, &trial, sub);
                        if tres.norm2_sq() <= (1.0 - self.opts.armijo * alpha) * f2 {
                            trial.clip_multipliers(&lower, &upper, sub.mu, self.opts.kappa_sigma);
                            accepted = Some((trial, Some(tev)));
                            backtracks = j;
                            break;
                        }
                    }
                }
                alpha *= 0.5;
            }
            let Some((trial, tev)) = accepted else {
                let residual = restore(w, best);
                return Err(InnerError::LineSearchFailure { iterations: iter, residual });
            };
            log(&InnerLog {
                iteration: iter,
                residual: res.block_norms(),
                objective: ev.f,
                alpha_primal: alpha,
                alpha_dual: ad,
                backtracks,
                delta: d.delta,
                factorizations: d.factorizations,
                refinement_steps: d.refinement_steps,
                perturbed_pivots: d.perturbed_pivots,
                extrapolation: false,
            });
            *w = trial;
            ev = tev.unwrap_or_else(|| Evaluation::at(view, &w.x));
            res = residual_at(view, &ev, w, sub);
            fnorm = res.norm();
            if !ev.is_finite() || !fnorm.is_finite() {
                let residual = restore(w, best);
                return Err(InnerError::NonFinite { iterations: iter, residual });
            }
            if fnorm < best.0 {
                best = (fnorm, w.clone());
            }
        }
    }
}

/// `‖c + r‖₁`.
pub fn primal_violation(c: &[f64], r: &[f64]) -> f64 {
    c.iter().zip(r).map(|(a, b)| (a + b).abs()).sum()
}

/// `f + y_kᵀr + ½ρ‖r‖² − μ Σ log(gap)` over finite bounds.
pub fn barrier_objective(f: f64, w: &Iterate, sub: &Subproblem, lower: &[f64], upper: &[f64]) -> f64 {
    let mut v = f;
    for i in 0..w.r.len() {
        v += sub.y_k[i] * w.r[i] + 0.5 * sub.rho * w.r[i] * w.r[i];
    }
    for i in 0..w.x.len() {
        if lower[i].is_finite() {
            v -= sub.mu * (w.x[i] - lower[i]).ln();
        }
        if upper[i].is_finite() {
            v -= sub.mu * (upper[i] - w.x[i]).ln();
        }
    }
    v
}

fn barrier_slope(grad: &[f64], w: &Iterate, d: &NewtonStep, sub: &Subproblem, lower: &[f64], upper: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..w.x.len() {
        let mut g = grad[i];
        if lower[i].is_finite() {
            g -= sub.mu / (w.x[i] - lower[i]);
        }
        if upper[i].is_finite() {
            g += sub.mu / (upper[i] - w.x[i]);
        }
        s += g * d.dx[i];
    }
    for i in 0..w.r.len() {
        s += (sub.y_k[i] + sub.rho * w.r[i]) * d.dr[i];
    }
    s
}

impl fmt::Display for InnerLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let r = self.residual;
        write!(
            f,
            "{:4} {:+.6e} {:.2e} {:.2e} {:.2e} {:.2e} {:.2e} {:.3} {:.3} {:.1e} {}",
            self.iteration,
            self.objective,
            r[0],
            r[1],
            r[2],
            r[3].max(r[4]),
            r.iter().fold(0.0f64, |a, &b| a.max(b)),
            self.alpha_primal,
            self.alpha_dual,
            self.delta,
            self.refinement_steps
        )
    }
}
