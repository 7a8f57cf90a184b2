//! Newton systems for the NCL barrier subproblem.
//!
//! The full (unsymmetric) system acts on `(Δx, Δr, Δy, Δz_l, Δz_u)`. Bound
//! multipliers are always eliminated; three symmetric formulations remain:
//!
//! - `K2`, unknowns `(Δx, Δr, −Δy)`, target inertia `(n+m, m, 0)`
//! - `K2r`, `Δr` eliminated, unknowns `(Δx, −Δy)`, target `(n, m, 0)`
//! - `K1s`, `Δy` and the slack step eliminated, unknown `Δt`, target `(n_t, 0, 0)`
//!
//! With primal regularization `δ` the penalty is `ρ̂ = ρ + δ` and `θ = 1/ρ̂`
//! everywhere, including the `r`-block of the residual, so all three
//! formulations solve the same regularized system exactly.

mod assemble;
mod recover;

use std::fmt;
use std::io;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use thiserror::Error;

use crate::sparse::{
    analyze, factorize, solve_refined, write_matrix_market, FactorError, Inertia, RefineOptions, SparseSymMatrix,
    SymbolicFactorization,
};

pub use assemble::{assemble, omega};
pub use recover::{k3_residual, recover_full_step};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KktFormulation {
    K2,
    K2r,
    K1s,
}

impl KktFormulation {
    pub const ALL: [KktFormulation; 3] = [KktFormulation::K2, KktFormulation::K2r, KktFormulation::K1s];

    pub fn name(self) -> &'static str {
        match self {
            KktFormulation::K2 => "k2",
            KktFormulation::K2r => "k2r",
            KktFormulation::K1s => "k1s",
        }
    }

    /// Dimension and inertia target for the given problem sizes.
    pub fn target(self, n_t: usize, n: usize, m: usize) -> (usize, Inertia) {
        match self {
            KktFormulation::K2 => (n + 2 * m, Inertia::new(n + m, m, 0)),
            KktFormulation::K2r => (n + m, Inertia::new(n, m, 0)),
            KktFormulation::K1s => (n_t, Inertia::new(n_t, 0, 0)),
        }
    }
}

impl fmt::Display for KktFormulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KktFormulation {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "k2" => Ok(KktFormulation::K2),
            "k2r" => Ok(KktFormulation::K2r),
            "k1s" => Ok(KktFormulation::K1s),
            _ => Err(format!("unknown KKT formulation '{s}' (expected k2, k2r or k1s)")),
        }
    }
}

/// Current point and derivative data for one Newton system.
///
/// `x = (t, s)` with `n_t` leading decision variables; rows `m_eq..m` are
/// inequalities whose Jacobian rows carry exactly one `−1` in slack column
/// `n_t + (i − m_eq)`. `jac_*` is row-compressed over `x`; `hess_*` is the
/// lower triangle of the Lagrangian Hessian over `t` in compressed columns.
#[derive(Debug, Clone, Copy)]
pub struct KktData<'a> {
    pub n_t: usize,
    pub m_eq: usize,
    pub x: &'a [f64],
    pub lower: &'a [f64],
    pub upper: &'a [f64],
    pub r: &'a [f64],
    pub y: &'a [f64],
    pub z_l: &'a [f64],
    pub z_u: &'a [f64],
    pub y_k: &'a [f64],
    pub rho: f64,
    pub mu: f64,
    pub grad: &'a [f64],
    pub c: &'a [f64],
    pub jac_row_ptr: &'a [usize],
    pub jac_col: &'a [usize],
    pub jac_val: &'a [f64],
    pub hess_col_ptr: &'a [usize],
    pub hess_row: &'a [usize],
    pub hess_val: &'a [f64],
}

impl KktData<'_> {
    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn m(&self) -> usize {
        self.c.len()
    }

    pub fn n_s(&self) -> usize {
        self.n() - self.n_t
    }

    /// `Σ = (X−L)⁻¹Z_l + (U−X)⁻¹Z_u` over finite bounds.
    pub fn sigma(&self) -> Vec<f64> {
        (0..self.n())
            .map(|i| {
                let mut s = 0.0;
                if self.lower[i].is_finite() {
                    s += self.z_l[i] / (self.x[i] - self.lower[i]);
                }
                if self.upper[i].is_finite() {
                    s += self.z_u[i] / (self.upper[i] - self.x[i]);
                }
                s
            })
            .collect()
    }

    /// `∇φ − Jᵀy − μ(X−L)⁻¹e + μ(U−X)⁻¹e`.
    pub fn barrier_gradient(&self) -> Vec<f64> {
        let mut g = self.grad.to_vec();
        for i in 0..self.m() {
            for k in self.jac_row_ptr[i]..self.jac_row_ptr[i + 1] {
                g[self.jac_col[k]] -= self.jac_val[k] * self.y[i];
            }
        }
        for (i, gi) in g.iter_mut().enumerate() {
            if self.lower[i].is_finite() {
                *gi -= self.mu / (self.x[i] - self.lower[i]);
            }
            if self.upper[i].is_finite() {
                *gi += self.mu / (self.upper[i] - self.x[i]);
            }
        }
        g
    }

    pub(crate) fn jac_mul(&self, v: &[f64], out: &mut [f64]) {
        for i in 0..self.m() {
            out[i] = (self.jac_row_ptr[i]..self.jac_row_ptr[i + 1]).map(|k| self.jac_val[k] * v[self.jac_col[k]]).sum();
        }
    }

    pub(crate) fn jac_t_mul(&self, w: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for i in 0..self.m() {
            for k in self.jac_row_ptr[i]..self.jac_row_ptr[i + 1] {
                out[self.jac_col[k]] += self.jac_val[k] * w[i];
            }
        }
    }

    /// `W v` over `t` (symmetric product from the lower triangle).
    pub(crate) fn hess_mul(&self, v: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for j in 0..self.n_t {
            for k in self.hess_col_ptr[j]..self.hess_col_ptr[j + 1] {
                let i = self.hess_row[k];
                let h = self.hess_val[k];
                out[i] += h * v[j];
                if i != j {
                    out[j] += h * v[i];
                }
            }
        }
    }

    fn check(&self) -> Result<(), KktError> {
        let (n, m) = (self.n(), self.m());
        let lens = [
            ("lower", self.lower.len(), n),
            ("upper", self.upper.len(), n),
            ("z_l", self.z_l.len(), n),
            ("z_u", self.z_u.len(), n),
            ("grad", self.grad.len(), n),
            ("r", self.r.len(), m),
            ("y", self.y.len(), m),
            ("y_k", self.y_k.len(), m),
            ("jac_row_ptr", self.jac_row_ptr.len(), m + 1),
            ("hess_col_ptr", self.hess_col_ptr.len(), self.n_t + 1),
        ];
        for (what, found, expected) in lens {
            if found != expected {
                return Err(KktError::DimensionMismatch { what, expected, found });
            }
        }
        if self.n_t > n || self.m_eq > m || m - self.m_eq != n - self.n_t {
            return Err(KktError::DimensionMismatch { what: "slack count", expected: m - self.m_eq, found: n - self.n_t });
        }
        if !(self.rho > 0.0) {
            return Err(KktError::NonPositivePenalty(self.rho));
        }
        for i in 0..n {
            let ok_l = !self.lower[i].is_finite() || (self.x[i] > self.lower[i] && self.z_l[i] > 0.0);
            let ok_u = !self.upper[i].is_finite() || (self.x[i] < self.upper[i] && self.z_u[i] > 0.0);
            if !(ok_l && ok_u) {
                return Err(KktError::NotInterior { index: i });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KktError {
    #[error("{what}: expected length {expected}, found {found}")]
    DimensionMismatch { what: &'static str, expected: usize, found: usize },
    #[error("iterate is not strictly interior at component {index}")]
    NotInterior { index: usize },
    #[error("penalty must be positive, got {0}")]
    NonPositivePenalty(f64),
    #[error("regularization exceeded {delta:e} without reaching inertia {target} (last {last:?})")]
    RegularizationLimit { delta: f64, target: Inertia, last: Option<Inertia> },
    #[error("factorization failed: {0}")]
    Factorization(FactorError),
}

/// Full Newton direction plus linear-algebra diagnostics.
#[derive(Debug, Clone, Default)]
pub struct NewtonStep {
    pub dx: Vec<f64>,
    pub dr: Vec<f64>,
    pub dy: Vec<f64>,
    pub dz_l: Vec<f64>,
    pub dz_u: Vec<f64>,
    /// Regularization used; `ρ̂ = ρ + delta`.
    pub delta: f64,
    pub factorizations: usize,
    pub inertia: Inertia,
    pub perturbed_pivots: usize,
    pub refinement_steps: usize,
    /// Absolute refined residual of the symmetric system.
    pub refinement_residual: f64,
}

/// Cumulative linear-solver timings and counts.
#[derive(Debug, Clone, Copy, Default)]
pub struct LinearStats {
    pub analyses: usize,
    pub factorizations: usize,
    pub solves: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct KktOptions {
    pub pivot_eps: f64,
    pub refine: RefineOptions,
    /// Accept a perturbed factorization only below `accept_tol·max(1, ‖rhs‖∞)`.
    pub accept_tol: f64,
    pub delta_max: f64,
    /// Write each assembled system as Matrix Market into this directory.
    pub dump_dir: Option<PathBuf>,
}

impl Default for KktOptions {
    fn default() -> Self {
        Self { pivot_eps: 1e-10, refine: RefineOptions::default(), accept_tol: 1e-8, delta_max: 1e40, dump_dir: None }
    }
}

/// Stateful solver: caches the symbolic analysis while the pattern is unchanged
/// and remembers the last successful regularization.
#[derive(Debug, Clone)]
pub struct KktSolver {
    pub form: KktFormulation,
    pub opts: KktOptions,
    symbolic: Option<SymbolicFactorization>,
    last_delta: Option<f64>,
    stats: LinearStats,
    dumps: usize,
}

impl KktSolver {
    pub fn new(form: KktFormulation, opts: KktOptions) -> Self {
        Self { form, opts, symbolic: None, last_delta: None, stats: LinearStats::default(), dumps: 0 }
    }

    pub fn stats(&self) -> LinearStats {
        self.stats
    }

    pub fn last_delta(&self) -> Option<f64> {
        self.last_delta
    }

    /// Inertia-corrected solve: `δ = 0` first, then the warm-started
    /// escalation `max(1e-20, δ_last/3)` or `1e-8·max(1, ‖Ĥ‖max)`, growing ×8.
    pub fn solve(&mut self, data: &KktData) -> Result<NewtonStep, KktError> {
        data.check()?;
        let mut delta = 0.0;
        let mut attempts = 0;
        let mut last_inertia: Option<Inertia>;
        let target = self.form.target(data.n_t, data.n(), data.m()).1;
        loop {
            attempts += 1;
            match self.try_solve(data, delta)? {
                Ok(mut step) => {
                    step.factorizations = attempts;
                    if delta > 0.0 {
                        self.last_delta = Some(delta);
                    }
                    return Ok(step);
                }
                Err(inertia) => last_inertia = inertia,
            }
            delta = if delta == 0.0 {
                match self.last_delta {
                    Some(d) => (d / 3.0).max(1e-20),
                    None => 1e-8 * hessian_scale(data).max(1.0),
                }
            } else {
                8.0 * delta
            };
            if delta > self.opts.delta_max {
                return Err(KktError::RegularizationLimit { delta, target, last: last_inertia });
            }
        }
    }

    /// Solve with a fixed regularization. Fails if the inertia is wrong or the
    /// refined residual misses the acceptance tolerance.
    pub fn solve_with_delta(&mut self, data: &KktData, delta: f64) -> Result<NewtonStep, KktError> {
        data.check()?;
        let target = self.form.target(data.n_t, data.n(), data.m()).1;
        match self.try_solve(data, delta)? {
            Ok(mut s) => {
                s.factorizations = 1;
                Ok(s)
            }
            Err(last) => Err(KktError::RegularizationLimit { delta, target, last }),
        }
    }

    /// `Ok(Ok(step))` on success, `Ok(Err(inertia))` when this δ is rejected.
    fn try_solve(&mut self, data: &KktData, delta: f64) -> Result<Result<NewtonStep, Option<Inertia>>, KktError> {
        let (mat, rhs) = assemble(self.form, data, delta);
        if let Some(dir) = &self.opts.dump_dir {
            self.dumps += 1;
            let path = dir.join(format!("kkt_{}_{:05}.mtx", self.form.name(), self.dumps));
            if let Err(e) = dump(&mat, &path) {
                eprintln!("warning: cannot write {}: {e}", path.display());
            }
        }
        let target = self.form.target(data.n_t, data.n(), data.m()).1;
        let t0 = Instant::now();
        if !self.symbolic.as_ref().is_some_and(|s| s.matches(&mat)) {
            self.symbolic = Some(analyze(&mat));
            self.stats.analyses += 1;
        }
        let sym = self.symbolic.as_ref().unwrap();
        self.stats.factorizations += 1;
        let fac = match factorize(sym, &mat, self.opts.pivot_eps) {
            Ok(f) => f,
            Err(FactorError::ZeroPivot { .. }) | Err(FactorError::NonFinite { .. }) => {
                self.stats.seconds += t0.elapsed().as_secs_f64();
                return Ok(Err(None));
            }
            Err(e) => return Err(KktError::Factorization(e)),
        };
        let inertia = fac.inertia();
        if inertia != target {
            self.stats.seconds += t0.elapsed().as_secs_f64();
            return Ok(Err(Some(inertia)));
        }
        let sol = solve_refined(&fac, &mat, &rhs, &self.opts.refine);
        self.stats.solves += 1;
        self.stats.seconds += t0.elapsed().as_secs_f64();
        let scale = rhs.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        if !(sol.residual_abs <= self.opts.accept_tol * scale) {
            return Ok(Err(Some(inertia)));
        }
        let mut step = recover_full_step(self.form, data, delta, &sol.x);
        step.inertia = inertia;
        step.perturbed_pivots = fac.perturbed_pivots();
        step.refinement_steps = sol.steps;
        step.refinement_residual = sol.residual_abs;
        Ok(Ok(step))
    }
}

/// `‖Ĥ‖max` over the primal block: Hessian entries and `Σ`.
fn hessian_scale(data: &KktData) -> f64 {
    let h = data.hess_val.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    data.sigma().iter().fold(h, |a, v| a.max(v.abs()))
}

fn dump(mat: &SparseSymMatrix<f64>, path: &std::path::Path) -> io::Result<()> {
    let f = std::fs::File::create(path)?;
    write_matrix_market(mat, io::BufWriter::new(f))
}
