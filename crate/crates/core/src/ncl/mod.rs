//! Outer augmented Lagrangian loop fused with the interior-point inner loop.
//!
//! Each outer iteration first tries a single extrapolation (Newton) step on
//! the current subproblem and only falls back to a full inner solve when the
//! step does not halve the residual. The multiplier, penalty, barrier and
//! tolerance schedules are then updated together.

mod scaling;

use std::fmt;
use std::path::PathBuf;
use std::time::Instant;

use crate::ipm::{
    fraction_to_boundary, ftb_tau, residual_at, Evaluation, InnerError, InnerLog, InnerOptions, InnerSolver, Iterate,
    Subproblem,
};
use crate::kkt::{KktFormulation, KktOptions, LinearStats};
use crate::model::{Model, NlpView};

pub use scaling::{compute_scaling, init_duals, scale_factor, ScaleFactors};

/// Fixed constants of the outer loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub gamma: f64,
    pub tau: f64,
    pub mu_fac: f64,
    pub rho_max: f64,
    pub theta: f64,
    /// Lower limit on `μ`; keeps the barrier term representable.
    pub mu_min: f64,
}

impl Default for Schedule {
    fn default() -> Self {
        Self { gamma: 0.05, tau: 1.99, mu_fac: 0.2, rho_max: 1e14, theta: 0.5, mu_min: 1e-11 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OuterState {
    pub k: usize,
    pub rho: f64,
    pub mu: f64,
    pub eta: f64,
    pub omega: f64,
    pub y_k: Vec<f64>,
    pub schedule: Schedule,
}

impl OuterState {
    /// `η₀ = μ₀^1.1`, `ω₀ = 100·μ₀^(1+γ)`.
    pub fn new(y0: Vec<f64>, rho0: f64, mu0: f64, schedule: Schedule) -> Self {
        Self {
            k: 0,
            rho: rho0,
            mu: mu0,
            eta: mu0.powf(1.1),
            omega: 100.0 * mu0.powf(1.0 + schedule.gamma),
            y_k: y0,
            schedule,
        }
    }
}

/// Applies the multiplier/penalty update for the new `r`. Returns whether the
/// success branch (`‖r‖∞ ≤ η`) fired.
pub fn outer_update(st: &mut OuterState, r: &[f64]) -> bool {
    let rn = r.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let s = st.schedule;
    st.k += 1;
    if rn <= st.eta {
        for (y, ri) in st.y_k.iter_mut().zip(r) {
            *y += st.rho * ri;
        }
        let mu_old = st.mu;
        let mu = (mu_old.powf(s.tau)).min(s.mu_fac * mu_old).max(s.mu_min);
        st.mu = mu;
        st.eta = mu.powf(1.1).min(0.1 * mu_old);
        st.omega = 100.0 * mu.powf(1.0 + s.gamma);
        true
    } else {
        st.rho = (10.0 * st.rho).min(s.rho_max);
        false
    }
}

/// Extrapolation acceptance: `‖F(w⁺)‖ ≤ θ‖F(w)‖ + 10 α^0.2 μ`.
pub fn extrapolation_accepted(f_plus: f64, f: f64, alpha: f64, mu: f64, theta: f64) -> bool {
    f_plus <= theta * f + 10.0 * alpha.powf(0.2) * mu
}

#[derive(Debug, Clone)]
pub struct Extrapolation {
    pub accepted: bool,
    pub alpha: f64,
    pub f_before: f64,
    pub f_after: f64,
    pub w_plus: Option<Iterate>,
    pub log: Option<InnerLog>,
}

/// One Newton step on `F_k` from `w`, damped only by fraction-to-boundary.
pub fn extrapolation_step(
    inner: &mut InnerSolver,
    view: &mut NlpView,
    w: &Iterate,
    sub: &Subproblem,
    theta: f64,
) -> Extrapolation {
    let ev = Evaluation::at(view, &w.x);
    let res = residual_at(view, &ev, w, sub);
    let f_before = res.norm();
    let rejected = |alpha: f64, f_after: f64| Extrapolation {
        accepted: false,
        alpha,
        f_before,
        f_after,
        w_plus: None,
        log: None,
    };
    if !ev.is_finite() {
        return rejected(0.0, f64::INFINITY);
    }
    let d = match inner.newton_step(view, &ev, w, sub) {
        Ok(d) => d,
        Err(_) => return rejected(0.0, f64::INFINITY),
    };
    let (lower, upper) = (view.lower().to_vec(), view.upper().to_vec());
    let (ap, ad) = fraction_to_boundary(&lower, &upper, w, &d, ftb_tau(sub.mu));
    let alpha = ap.min(ad);
    let mut wp = w.stepped(&d, alpha, alpha);
    wp.clip_multipliers(&lower, &upper, sub.mu, inner.opts.kappa_sigma);
    let evp = Evaluation::at(view, &wp.x);
    if !evp.is_finite() {
        return rejected(alpha, f64::INFINITY);
    }
    let f_after = residual_at(view, &evp, &wp, sub).norm();
    let accepted = extrapolation_accepted(f_after, f_before, alpha, sub.mu, theta);
    let log = InnerLog {
        iteration: 0,
        residual: res.block_norms(),
        objective: ev.f,
        alpha_primal: alpha,
        alpha_dual: alpha,
        backtracks: 0,
        delta: d.delta,
        factorizations: d.factorizations,
        refinement_steps: d.refinement_steps,
        perturbed_pivots: d.perturbed_pivots,
        extrapolation: true,
    };
    Extrapolation { accepted, alpha, f_before, f_after, w_plus: accepted.then_some(wp), log: Some(log) }
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub formulation: KktFormulation,
    /// Primal target `η⋆` on unscaled `‖r‖∞`.
    pub eta_tol: f64,
    /// Dual target `ω⋆` on the unscaled stationarity residual.
    pub omega_tol: f64,
    pub max_outer: usize,
    pub max_inner_total: usize,
    pub max_inner_per_subproblem: usize,
    pub pivot_eps: f64,
    pub scaling: bool,
    pub rho0: f64,
    pub mu0: f64,
    pub schedule: Schedule,
    pub dump_kkt: Option<PathBuf>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            formulation: KktFormulation::K2r,
            eta_tol: 1e-8,
            omega_tol: 1e-8,
            max_outer: 50,
            max_inner_total: 1000,
            max_inner_per_subproblem: 200,
            pivot_eps: 1e-10,
            scaling: true,
            rho0: 100.0,
            mu0: 0.1,
            schedule: Schedule::default(),
            dump_kkt: None,
        }
    }
}

impl SolveOptions {
    /// Sets both targets.
    pub fn with_tol(mut self, tol: f64) -> Self {
        self.eta_tol = tol;
        self.omega_tol = tol;
        self
    }

    pub fn with_formulation(mut self, form: KktFormulation) -> Self {
        self.formulation = form;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SolveStatus {
    Optimal,
    Acceptable,
    LocallyInfeasible,
    IterationLimit,
    StepFailure,
}

impl SolveStatus {
    pub fn name(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Acceptable => "acceptable",
            SolveStatus::LocallyInfeasible => "locally-infeasible",
            SolveStatus::IterationLimit => "iteration-limit",
            SolveStatus::StepFailure => "step-failure",
        }
    }
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One outer iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct OuterLog {
    pub k: usize,
    /// Parameters the iteration ran with.
    pub rho: f64,
    pub mu: f64,
    pub eta: f64,
    pub omega: f64,
    pub extrapolated: bool,
    pub alpha: f64,
    /// `‖F_k‖∞` before and after the extrapolation trial.
    pub f_before: f64,
    pub f_after: f64,
    /// `‖F_k‖∞` at the new iterate.
    pub f_final: f64,
    pub inner_iterations: usize,
    pub inner_error: Option<String>,
    pub success_branch: bool,
    /// Unscaled `‖r‖∞` and dual residual at the new iterate.
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub objective: f64,
}

/// Outer or inner progress, in order of occurrence.
#[derive(Debug, Clone, Copy)]
pub enum Event<'a> {
    Inner { outer: usize, rho: f64, mu: f64, log: &'a InnerLog },
    Outer(&'a OuterLog),
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub formulation: KktFormulation,
    /// Model-space variables (fixed ones included).
    pub x: Vec<f64>,
    /// Unscaled inequality slacks.
    pub slacks: Vec<f64>,
    pub objective: f64,
    /// Unscaled constraint multipliers `y_{k+1}`.
    pub y: Vec<f64>,
    /// Unscaled bound multipliers over model variables (0 on fixed ones).
    pub z_l: Vec<f64>,
    pub z_u: Vec<f64>,
    /// Unscaled `r`.
    pub r: Vec<f64>,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// Max violation of the original constraints and bounds.
    pub constraint_violation: f64,
    pub mu: f64,
    pub rho: f64,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub extrapolations: usize,
    pub scale: ScaleFactors,
    pub linear: LinearStats,
    pub seconds: f64,
    pub log: Vec<OuterLog>,
}

pub fn solve(model: &Model, opts: &SolveOptions) -> SolveReport {
    solve_with_events(model, opts, &mut |_| {})
}

pub fn solve_with_events(model: &Model, opts: &SolveOptions, events: &mut dyn FnMut(Event)) -> SolveReport {
    let start = Instant::now();
    let mut view = model.to_nlp_form();
    let scale = if opts.scaling {
        let sf = compute_scaling(model, model.start(), view.free_vars());
        view.set_scaling(sf.objective, sf.constraints.clone());
        sf
    } else {
        ScaleFactors { objective: 1.0, constraints: vec![1.0; view.m()] }
    };
    let x0 = view.initial_x();
    let y0 = init_duals(&mut view, &x0);
    let mut st = OuterState::new(y0.clone(), opts.rho0, opts.mu0, opts.schedule);
    let mut w = Iterate::initial(view.lower(), view.upper(), &x0, y0, st.mu);

    let kkt_opts = KktOptions { pivot_eps: opts.pivot_eps, dump_dir: opts.dump_kkt.clone(), ..Default::default() };
    let mut inner = InnerSolver::new(opts.formulation, kkt_opts, InnerOptions::default());
    let mut log = Vec::new();
    let mut inner_total = 0usize;
    let mut extrapolations = 0usize;
    let mut step_failures = 0usize;
    let mut status = None;
    let mut last = Metrics::default();

    while status.is_none() {
        if st.k >= opts.max_outer || inner_total >= opts.max_inner_total {
            break;
        }
        let k = st.k;
        let (rho, mu, eta, omega) = (st.rho, st.mu, st.eta, st.omega);
        let y_k = st.y_k.clone();
        let sub = Subproblem { rho, mu, y_k: &y_k };

        let ex = extrapolation_step(&mut inner, &mut view, &w, &sub, st.schedule.theta);
        inner_total += 1;
        if let Some(l) = &ex.log {
            events(Event::Inner { outer: k, rho, mu, log: l });
        }
        let mut inner_iters = 0;
        let mut inner_error = None;
        let mut failed = false;
        if ex.accepted {
            extrapolations += 1;
            w = ex.w_plus.clone().expect("accepted step carries its iterate");
        } else {
            let budget = opts.max_inner_per_subproblem.min(opts.max_inner_total.saturating_sub(inner_total));
            let out = inner.solve(&mut view, &mut w, &sub, omega, budget, &mut |l| {
                events(Event::Inner { outer: k, rho, mu, log: l })
            });
            match out {
                Ok(rep) => {
                    inner_iters = rep.iterations;
                    step_failures = 0;
                }
                Err(e) => {
                    inner_iters = e.iterations();
                    if matches!(e, InnerError::StepFailure { .. } | InnerError::NonFinite { .. }) {
                        step_failures += 1;
                    }
                    inner_error = Some(e.to_string());
                    failed = true;
                }
            }
        }
        inner_total += inner_iters;

        let ev = Evaluation::at(&mut view, &w.x);
        let f_final = residual_at(&view, &ev, &w, &sub).norm();
        let success = if failed {
            st.k += 1;
            st.rho = (10.0 * st.rho).min(st.schedule.rho_max);
            false
        } else {
            outer_update(&mut st, &w.r)
        };
        last = metrics(&mut view, &ev, &w, &st.y_k);

        log.push(OuterLog {
            k,
            rho,
            mu,
            eta,
            omega,
            extrapolated: ex.accepted,
            alpha: ex.alpha,
            f_before: ex.f_before,
            f_after: ex.f_after,
            f_final,
            inner_iterations: inner_iters,
            inner_error,
            success_branch: success,
            primal_residual: last.primal,
            dual_residual: last.dual,
            objective: last.objective,
        });
        events(Event::Outer(log.last().unwrap()));

        if last.primal <= opts.eta_tol && last.dual <= opts.omega_tol && st.mu <= opts.omega_tol {
            status = Some(SolveStatus::Optimal);
        } else if st.rho >= st.schedule.rho_max && last.primal > opts.eta_tol {
            status = Some(SolveStatus::LocallyInfeasible);
        } else if step_failures >= 3 {
            status = Some(SolveStatus::StepFailure);
        }
    }

    let status = status.unwrap_or({
        if last.primal <= 100.0 * opts.eta_tol && last.dual <= 100.0 * opts.omega_tol && st.mu <= 100.0 * opts.omega_tol {
            SolveStatus::Acceptable
        } else {
            SolveStatus::IterationLimit
        }
    });

    let x = view.full_t(&w.x);
    let mut z_l = vec![0.0; model.n_t()];
    let mut z_u = vec![0.0; model.n_t()];
    for (k, &i) in view.free_vars().iter().enumerate() {
        z_l[i] = w.z_l[k] / view.obj_scale();
        z_u[i] = w.z_u[k] / view.obj_scale();
    }
    SolveReport {
        status,
        formulation: opts.formulation,
        slacks: view.unscaled_slacks(&w.x),
        objective: view.objective(&w.x) / view.obj_scale(),
        y: view.unscale_y(&st.y_k),
        z_l,
        z_u,
        r: view.unscale_rows(&w.r),
        primal_residual: last.primal,
        dual_residual: last.dual,
        constraint_violation: constraint_violation(model, &x),
        mu: st.mu,
        rho: st.rho,
        outer_iterations: st.k,
        inner_iterations: inner_total,
        extrapolations,
        scale,
        linear: inner.linear_stats(),
        seconds: start.elapsed().as_secs_f64(),
        log,
        x,
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Metrics {
    primal: f64,
    dual: f64,
    objective: f64,
}

/// Unscaled `‖r‖∞`, `‖∇φ − Jᵀy − z_l + z_u‖∞` and objective.
fn metrics(view: &mut NlpView, ev: &Evaluation, w: &Iterate, y: &[f64]) -> Metrics {
    let mut st = ev.grad.clone();
    let (rp, cols) = (view.jac_row_ptr(), view.jac_col());
    for i in 0..view.m() {
        for k in rp[i]..rp[i + 1] {
            st[cols[k]] -= ev.jac[k] * y[i];
        }
    }
    for (i, s) in st.iter_mut().enumerate() {
        *s += w.z_u[i] - w.z_l[i];
    }
    let inf = |v: &[f64]| v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    Metrics {
        primal: inf(&view.unscale_rows(&w.r)),
        dual: inf(&view.unscale_stationarity(&st)),
        objective: ev.f / view.obj_scale(),
    }
}

/// Max violation of bounds, equalities, and inequality ranges at model point `t`.
pub fn constraint_violation(model: &Model, t: &[f64]) -> f64 {
    let mut ws = model.workspace::<f64>();
    let (ce, ci) = model.eval_constraints(t, &mut ws).expect("consistent dimensions");
    let mut v = ce.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    for (j, c) in ci.iter().enumerate() {
        v = v.max(model.ineq_lower()[j] - c).max(c - model.ineq_upper()[j]);
    }
    for (i, x) in t.iter().enumerate() {
        v = v.max(model.lower()[i] - x).max(x - model.upper()[i]);
    }
    v
}
