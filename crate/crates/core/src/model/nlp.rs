//! Solver-facing view of a model: `x = (t, s)` with fixed variables removed,
//! `c(x) = [c_E(t); c_I(t) − s]`, and optional objective/constraint scaling.
//!
//! Scaled quantities: `φ' = σ_f φ`, `c'_i = σ_i c_i`, `s' = σ_i s`. The slack
//! block of the scaled Jacobian therefore stays `−I`, and slack bounds are
//! scaled with their rows.

use super::{DerivativeWorkspace, Model};

#[derive(Debug, Clone, Copy)]
enum JacSrc {
    Model(usize),
    Slack,
}

#[derive(Debug, Clone)]
pub struct NlpView<'a> {
    model: &'a Model,
    ws: DerivativeWorkspace<f64>,
    /// Free position → model variable.
    free: Vec<usize>,
    t_full: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    obj_scale: f64,
    con_scale: Vec<f64>,
    jac_row_ptr: Vec<usize>,
    jac_col: Vec<usize>,
    jac_src: Vec<JacSrc>,
    hess_col_ptr: Vec<usize>,
    hess_row: Vec<usize>,
    hess_src: Vec<usize>,
    y_model: Vec<f64>,
    grad_full: Vec<f64>,
}

impl<'a> NlpView<'a> {
    pub(super) fn new(model: &'a Model) -> Self {
        let nt_all = model.n_t();
        let free: Vec<usize> = (0..nt_all).filter(|&i| model.lower[i] != model.upper[i]).collect();
        let mut pos = vec![usize::MAX; nt_all];
        for (k, &i) in free.iter().enumerate() {
            pos[i] = k;
        }
        let mut t_full = model.start.clone();
        for i in 0..nt_all {
            if model.lower[i] == model.upper[i] {
                t_full[i] = model.lower[i];
            }
        }
        let n_t = free.len();
        let m_eq = model.m_eq();
        let m = model.m();

        let jp = model.jacobian_pattern();
        let mut jac_row_ptr = vec![0usize];
        let mut jac_col = Vec::new();
        let mut jac_src = Vec::new();
        for i in 0..m {
            for k in jp.row_ptr[i]..jp.row_ptr[i + 1] {
                let p = pos[jp.col_idx[k]];
                if p != usize::MAX {
                    jac_col.push(p);
                    jac_src.push(JacSrc::Model(k));
                }
            }
            if i >= m_eq {
                jac_col.push(n_t + i - m_eq);
                jac_src.push(JacSrc::Slack);
            }
            jac_row_ptr.push(jac_col.len());
        }

        let hp = model.hessian_pattern();
        let mut hess_col_ptr = vec![0usize; n_t + 1];
        let mut hess_row = Vec::new();
        let mut hess_src = Vec::new();
        for c in 0..nt_all {
            if pos[c] == usize::MAX {
                continue;
            }
            for k in hp.col_ptr[c]..hp.col_ptr[c + 1] {
                let r = pos[hp.row_idx[k]];
                if r != usize::MAX {
                    hess_row.push(r);
                    hess_src.push(k);
                }
            }
            hess_col_ptr[pos[c] + 1] = hess_row.len();
        }
        for j in 0..n_t {
            hess_col_ptr[j + 1] = hess_col_ptr[j + 1].max(hess_col_ptr[j]);
        }

        let mut view = Self {
            model,
            ws: model.workspace(),
            free,
            t_full,
            lower: Vec::new(),
            upper: Vec::new(),
            obj_scale: 1.0,
            con_scale: vec![1.0; m],
            jac_row_ptr,
            jac_col,
            jac_src,
            hess_col_ptr,
            hess_row,
            hess_src,
            y_model: vec![0.0; m],
            grad_full: vec![0.0; nt_all],
        };
        view.refresh_bounds();
        view
    }

    fn refresh_bounds(&mut self) {
        let md = self.model;
        let m_eq = md.m_eq();
        let mut lower: Vec<f64> = self.free.iter().map(|&i| md.lower[i]).collect();
        let mut upper: Vec<f64> = self.free.iter().map(|&i| md.upper[i]).collect();
        for j in 0..md.m_ineq() {
            let s = self.con_scale[m_eq + j];
            let (mut l, mut u) = (md.ineq_lower[j], md.ineq_upper[j]);
            // a zero-width range has no interior
            if l == u {
                let pad = 1e-8 * l.abs().max(1.0);
                l -= pad;
                u += pad;
            }
            lower.push(s * l);
            upper.push(s * u);
        }
        self.lower = lower;
        self.upper = upper;
    }

    pub fn model(&self) -> &'a Model {
        self.model
    }

    /// Primal dimension `n_t + n_s`.
    pub fn n(&self) -> usize {
        self.free.len() + self.model.m_ineq()
    }

    /// Free decision variables.
    pub fn n_t(&self) -> usize {
        self.free.len()
    }

    pub fn n_s(&self) -> usize {
        self.model.m_ineq()
    }

    pub fn m(&self) -> usize {
        self.model.m()
    }

    pub fn m_eq(&self) -> usize {
        self.model.m_eq()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn free_vars(&self) -> &[usize] {
        &self.free
    }

    pub fn obj_scale(&self) -> f64 {
        self.obj_scale
    }

    pub fn con_scale(&self) -> &[f64] {
        &self.con_scale
    }

    pub fn set_scaling(&mut self, obj_scale: f64, con_scale: Vec<f64>) {
        assert_eq!(con_scale.len(), self.m());
        self.obj_scale = obj_scale;
        self.con_scale = con_scale;
        self.refresh_bounds();
    }

    fn load_t(&mut self, x: &[f64]) {
        debug_assert_eq!(x.len(), self.n());
        for (k, &i) in self.free.iter().enumerate() {
            self.t_full[i] = x[k];
        }
    }

    /// Model-space `t` for an NLP point.
    pub fn full_t(&mut self, x: &[f64]) -> Vec<f64> {
        self.load_t(x);
        self.t_full.clone()
    }

    /// Unscaled slack values.
    pub fn unscaled_slacks(&self, x: &[f64]) -> Vec<f64> {
        let m_eq = self.m_eq();
        x[self.n_t()..].iter().enumerate().map(|(j, &s)| s / self.con_scale[m_eq + j]).collect()
    }

    /// Start point: model start on `t`, slacks at `c_I(t₀)` projected onto their bounds.
    pub fn initial_x(&mut self) -> Vec<f64> {
        let t0 = self.model.start.clone();
        let mut x: Vec<f64> = self.free.iter().map(|&i| t0[i]).collect();
        let mut c = vec![0.0; self.m()];
        self.model.eval_constraints_into(&self.t_full, &mut self.ws, &mut c).expect("consistent dimensions");
        let m_eq = self.m_eq();
        let nt = self.n_t();
        for j in 0..self.n_s() {
            let v = self.con_scale[m_eq + j] * c[m_eq + j];
            x.push(v.clamp(self.lower[nt + j], self.upper[nt + j]));
        }
        x
    }

    /// Scaled objective.
    pub fn objective(&mut self, x: &[f64]) -> f64 {
        self.load_t(x);
        self.obj_scale * self.model.eval_objective(&self.t_full, &mut self.ws).expect("consistent dimensions")
    }

    /// Scaled gradient over `x`; slack entries are zero. Returns the scaled objective.
    pub fn gradient(&mut self, x: &[f64], g: &mut [f64]) -> f64 {
        self.load_t(x);
        let f = self.model.eval_gradient_into(&self.t_full, &mut self.ws, &mut self.grad_full).expect("consistent dimensions");
        for (k, &i) in self.free.iter().enumerate() {
            g[k] = self.obj_scale * self.grad_full[i];
        }
        g[self.free.len()..].iter_mut().for_each(|v| *v = 0.0);
        self.obj_scale * f
    }

    /// Scaled `c(x)`.
    pub fn constraints(&mut self, x: &[f64], c: &mut [f64]) {
        self.load_t(x);
        self.model.eval_constraints_into(&self.t_full, &mut self.ws, c).expect("consistent dimensions");
        let m_eq = self.m_eq();
        let nt = self.n_t();
        for (i, ci) in c.iter_mut().enumerate() {
            *ci *= self.con_scale[i];
            if i >= m_eq {
                *ci -= x[nt + i - m_eq];
            }
        }
    }

    pub fn jac_row_ptr(&self) -> &[usize] {
        &self.jac_row_ptr
    }

    pub fn jac_col(&self) -> &[usize] {
        &self.jac_col
    }

    /// Scaled Jacobian values aligned with [`Self::jac_row_ptr`]/[`Self::jac_col`].
    pub fn jacobian(&mut self, x: &[f64], vals: &mut [f64]) {
        self.load_t(x);
        let mv = self.model.eval_jacobian(&self.t_full, &mut self.ws).expect("consistent dimensions");
        for i in 0..self.con_scale.len() {
            let s = self.con_scale[i];
            for k in self.jac_row_ptr[i]..self.jac_row_ptr[i + 1] {
                vals[k] = match self.jac_src[k] {
                    JacSrc::Model(p) => s * mv[p],
                    JacSrc::Slack => -1.0,
                };
            }
        }
    }

    pub fn hess_col_ptr(&self) -> &[usize] {
        &self.hess_col_ptr
    }

    pub fn hess_row(&self) -> &[usize] {
        &self.hess_row
    }

    /// Scaled Lagrangian Hessian `σ_f∇²f − Σ y'_i σ_i ∇²c_i` over free `t`
    /// (lower triangle, aligned with [`Self::hess_col_ptr`]/[`Self::hess_row`]).
    pub fn hessian(&mut self, x: &[f64], y: &[f64], vals: &mut [f64]) {
        self.load_t(x);
        for (i, ym) in self.y_model.iter_mut().enumerate() {
            *ym = y[i] * self.con_scale[i];
        }
        let hv = self
            .model
            .eval_lag_hessian(&self.t_full, &self.y_model, self.obj_scale, &mut self.ws)
            .expect("consistent dimensions");
        for (v, &s) in vals.iter_mut().zip(&self.hess_src) {
            *v = hv[s];
        }
    }

    /// Maps a scaled stationarity vector over `x` to the unscaled problem.
    pub fn unscale_stationarity(&self, f1: &[f64]) -> Vec<f64> {
        let nt = self.n_t();
        let m_eq = self.m_eq();
        f1.iter()
            .enumerate()
            .map(|(k, &v)| if k < nt { v / self.obj_scale } else { v * self.con_scale[m_eq + k - nt] / self.obj_scale })
            .collect()
    }

    /// Unscaled constraint multipliers.
    pub fn unscale_y(&self, y: &[f64]) -> Vec<f64> {
        y.iter().zip(&self.con_scale).map(|(&v, &s)| v * s / self.obj_scale).collect()
    }

    /// Unscaled constraint-space vector (`c` or `r`).
    pub fn unscale_rows(&self, r: &[f64]) -> Vec<f64> {
        r.iter().zip(&self.con_scale).map(|(&v, &s)| v / s).collect()
    }
}
