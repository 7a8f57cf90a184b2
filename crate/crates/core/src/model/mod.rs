//! Expression-graph models with exact sparse derivatives.
//!
//! An [`NcoProblem`] is assembled term by term and compiled into an immutable
//! [`Model`]. Each function is split at its top-level sum into tapes; tapes
//! give gradients by a reverse sweep and Hessian columns by forward-over-reverse.
//! Sparsity patterns are fixed at compile time.

mod expr;
mod nlp;
mod tape;

use std::collections::BTreeSet;
use std::sync::Arc;

use thiserror::Error;

use crate::scalar::Real;
use crate::sparse::SparseSymMatrix;

pub use expr::{Expr, Node};
pub use nlp::NlpView;
use tape::{packed_index, Tape, TapeScratch};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("{what}: expected length {expected}, found {found}")]
    DimensionMismatch { what: &'static str, expected: usize, found: usize },
    #[error("expression references variable {index} but only {n} are declared")]
    UnknownVariable { index: usize, n: usize },
    #[error("variable {index}: lower bound {lower} exceeds upper bound {upper}")]
    InvalidBounds { index: usize, lower: f64, upper: f64 },
    #[error("inequality {row}: lower {lower} exceeds upper {upper}")]
    InvalidRange { row: usize, lower: f64, upper: f64 },
    #[error("variable {index}: start value is not finite")]
    InvalidStart { index: usize },
}

/// Problem in the form
///
/// ```text
/// min f(t)  s.t.  c_E(t) = 0,  ℓ_s ≤ c_I(t) ≤ u_s,  ℓ_t ≤ t ≤ u_t
/// ```
#[derive(Debug, Clone)]
pub struct NcoProblem {
    name: String,
    names: Vec<String>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    start: Vec<Option<f64>>,
    objective: Expr,
    equalities: Vec<Expr>,
    inequalities: Vec<(Expr, f64, f64)>,
}

impl NcoProblem {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            names: Vec::new(),
            lower: Vec::new(),
            upper: Vec::new(),
            start: Vec::new(),
            objective: Expr::constant(0.0),
            equalities: Vec::new(),
            inequalities: Vec::new(),
        }
    }

    /// Declares a variable and returns its expression handle. Use
    /// `f64::INFINITY` for absent bounds.
    pub fn add_var(&mut self, name: impl Into<String>, lower: f64, upper: f64, start: Option<f64>) -> Expr {
        self.names.push(name.into());
        self.lower.push(lower);
        self.upper.push(upper);
        self.start.push(start);
        Expr::var(self.names.len() - 1)
    }

    /// Declares `count` variables sharing bounds and start.
    pub fn add_vars(&mut self, prefix: &str, count: usize, lower: f64, upper: f64, start: Option<f64>) -> Vec<Expr> {
        (0..count).map(|i| self.add_var(format!("{prefix}{i}"), lower, upper, start)).collect()
    }

    pub fn set_start(&mut self, index: usize, value: f64) {
        self.start[index] = Some(value);
    }

    pub fn set_objective(&mut self, f: Expr) {
        self.objective = f;
    }

    pub fn add_equality(&mut self, c: Expr) {
        self.equalities.push(c);
    }

    pub fn add_inequality(&mut self, c: Expr, lower: f64, upper: f64) {
        self.inequalities.push((c, lower, upper));
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n_vars(&self) -> usize {
        self.names.len()
    }

    pub fn objective(&self) -> &Expr {
        &self.objective
    }

    pub fn equalities(&self) -> &[Expr] {
        &self.equalities
    }

    pub fn inequalities(&self) -> &[(Expr, f64, f64)] {
        &self.inequalities
    }

    pub fn bounds(&self, index: usize) -> (f64, f64) {
        (self.lower[index], self.upper[index])
    }

    pub fn var_name(&self, index: usize) -> &str {
        &self.names[index]
    }

    pub fn start(&self, index: usize) -> Option<f64> {
        self.start[index]
    }

    pub fn compile(&self) -> Result<Model, ModelError> {
        let n = self.names.len();
        for i in 0..n {
            let (l, u) = (self.lower[i], self.upper[i]);
            if l.is_nan() || u.is_nan() || l > u || l == f64::INFINITY || u == f64::NEG_INFINITY {
                return Err(ModelError::InvalidBounds { index: i, lower: l, upper: u });
            }
            if let Some(s) = self.start[i] {
                if !s.is_finite() {
                    return Err(ModelError::InvalidStart { index: i });
                }
            }
        }
        for (row, &(_, l, u)) in self.inequalities.iter().enumerate() {
            if l.is_nan() || u.is_nan() || l > u || l == f64::INFINITY || u == f64::NEG_INFINITY {
                return Err(ModelError::InvalidRange { row, lower: l, upper: u });
            }
        }
        let all = std::iter::once(&self.objective)
            .chain(self.equalities.iter())
            .chain(self.inequalities.iter().map(|(e, _, _)| e));
        for e in all.clone() {
            if let Some(v) = e.max_var() {
                if v >= n {
                    return Err(ModelError::UnknownVariable { index: v, n });
                }
            }
        }

        let start = (0..n)
            .map(|i| {
                self.start[i].unwrap_or_else(|| {
                    let (l, u) = (self.lower[i], self.upper[i]);
                    match (l.is_finite(), u.is_finite()) {
                        (true, true) => 0.5 * (l + u),
                        _ => 0.0f64.clamp(l, u),
                    }
                })
            })
            .collect();

        let objective = Function::compile(&self.objective);
        let rows: Vec<Function> = self
            .equalities
            .iter()
            .chain(self.inequalities.iter().map(|(e, _, _)| e))
            .map(Function::compile)
            .collect();

        // Jacobian pattern, row-wise
        let mut row_ptr = vec![0usize];
        let mut col_idx = Vec::new();
        let mut jac_slots = Vec::with_capacity(rows.len());
        for f in &rows {
            let cols: BTreeSet<usize> = f.tapes.iter().flat_map(|t| t.vars().iter().copied()).collect();
            let base = col_idx.len();
            let cols: Vec<usize> = cols.into_iter().collect();
            let slots: Vec<Vec<usize>> = f
                .tapes
                .iter()
                .map(|t| t.vars().iter().map(|v| base + cols.binary_search(v).unwrap()).collect())
                .collect();
            col_idx.extend(cols);
            row_ptr.push(col_idx.len());
            jac_slots.push(slots);
        }
        let jacobian = Arc::new(JacobianPattern { nrows: rows.len(), ncols: n, row_ptr, col_idx });

        // Hessian pattern, lower triangle by columns
        let mut entries: BTreeSet<(usize, usize)> = BTreeSet::new();
        for f in std::iter::once(&objective).chain(rows.iter()) {
            for t in f.tapes.iter().filter(|t| !t.is_linear()) {
                let v = t.vars();
                for c in 0..v.len() {
                    for r in c..v.len() {
                        entries.insert((v[c], v[r]));
                    }
                }
            }
        }
        let mut h_col_ptr = vec![0usize; n + 1];
        let mut h_row = Vec::with_capacity(entries.len());
        for &(c, r) in &entries {
            h_col_ptr[c + 1] += 1;
            h_row.push(r);
        }
        for j in 0..n {
            h_col_ptr[j + 1] += h_col_ptr[j];
        }
        let hessian = Arc::new(HessianPattern { n, col_ptr: h_col_ptr, row_idx: h_row });
        let hess_slots = |f: &Function| -> Vec<Vec<usize>> {
            f.tapes
                .iter()
                .map(|t| {
                    if t.is_linear() {
                        return Vec::new();
                    }
                    let v = t.vars();
                    let k = v.len();
                    let mut slots = vec![0usize; k * (k + 1) / 2];
                    for c in 0..k {
                        for r in c..k {
                            slots[packed_index(k, r, c)] = hessian.slot(v[r], v[c]).unwrap();
                        }
                    }
                    slots
                })
                .collect()
        };
        let objective_hess = hess_slots(&objective);
        let rows_hess = rows.iter().map(hess_slots).collect();
        let max_tape = std::iter::once(&objective)
            .chain(rows.iter())
            .flat_map(|f| f.tapes.iter())
            .map(|t| t.vars().len())
            .max()
            .unwrap_or(0);

        Ok(Model {
            name: self.name.clone(),
            names: self.names.clone(),
            lower: self.lower.clone(),
            upper: self.upper.clone(),
            ineq_lower: self.inequalities.iter().map(|c| c.1).collect(),
            ineq_upper: self.inequalities.iter().map(|c| c.2).collect(),
            start,
            m_eq: self.equalities.len(),
            objective,
            objective_hess,
            rows,
            jac_slots,
            rows_hess,
            jacobian,
            hessian,
            max_tape,
        })
    }
}

#[derive(Debug, Clone)]
struct Function {
    tapes: Vec<Tape>,
}

impl Function {
    fn compile(e: &Expr) -> Function {
        let tapes = match e.node() {
            Node::Sum(ch) => ch.iter().map(Tape::compile).collect(),
            _ => vec![Tape::compile(e)],
        };
        Function { tapes }
    }
}

/// Row-compressed Jacobian pattern of `[c_E; c_I]` over `t`; columns sorted within rows.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianPattern {
    pub nrows: usize,
    pub ncols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
}

impl JacobianPattern {
    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }
}

/// Lower-triangle column-compressed pattern of the Lagrangian Hessian.
#[derive(Debug, Clone, PartialEq)]
pub struct HessianPattern {
    pub n: usize,
    pub col_ptr: Vec<usize>,
    pub row_idx: Vec<usize>,
}

impl HessianPattern {
    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    /// Storage position of `(i, j)` in either triangle.
    pub fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        let rows = &self.row_idx[self.col_ptr[c]..self.col_ptr[c + 1]];
        rows.binary_search(&r).ok().map(|k| self.col_ptr[c] + k)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |c| self.row_idx[self.col_ptr[c]..self.col_ptr[c + 1]].iter().map(move |&r| (r, c)))
    }
}

/// Compiled, immutable model. Safe to share across threads; each evaluating
/// thread owns a [`DerivativeWorkspace`].
#[derive(Debug, Clone)]
pub struct Model {
    name: String,
    names: Vec<String>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    ineq_lower: Vec<f64>,
    ineq_upper: Vec<f64>,
    start: Vec<f64>,
    m_eq: usize,
    objective: Function,
    objective_hess: Vec<Vec<usize>>,
    rows: Vec<Function>,
    jac_slots: Vec<Vec<Vec<usize>>>,
    rows_hess: Vec<Vec<Vec<usize>>>,
    jacobian: Arc<JacobianPattern>,
    hessian: Arc<HessianPattern>,
    max_tape: usize,
}

/// Patterns plus reusable buffers for derivative evaluation.
#[derive(Debug, Clone)]
pub struct DerivativeWorkspace<T> {
    pub jacobian_pattern: Arc<JacobianPattern>,
    pub hessian_pattern: Arc<HessianPattern>,
    pub jacobian_values: Vec<T>,
    pub hessian_values: Vec<T>,
    scratch: TapeScratch<T>,
    local: Vec<T>,
    local_hess: Vec<T>,
}

impl Model {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n_t(&self) -> usize {
        self.names.len()
    }

    pub fn m_eq(&self) -> usize {
        self.m_eq
    }

    pub fn m_ineq(&self) -> usize {
        self.rows.len() - self.m_eq
    }

    pub fn m(&self) -> usize {
        self.rows.len()
    }

    pub fn var_names(&self) -> &[String] {
        &self.names
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn ineq_lower(&self) -> &[f64] {
        &self.ineq_lower
    }

    pub fn ineq_upper(&self) -> &[f64] {
        &self.ineq_upper
    }

    /// Start point with defaults resolved: midpoint of finite bounds, otherwise
    /// zero projected onto the bounds.
    pub fn start(&self) -> &[f64] {
        &self.start
    }

    pub fn jacobian_pattern(&self) -> &JacobianPattern {
        &self.jacobian
    }

    pub fn hessian_pattern(&self) -> &HessianPattern {
        &self.hessian
    }

    pub fn workspace<T: Real>(&self) -> DerivativeWorkspace<T> {
        let k = self.max_tape;
        DerivativeWorkspace {
            jacobian_pattern: self.jacobian.clone(),
            hessian_pattern: self.hessian.clone(),
            jacobian_values: vec![T::zero(); self.jacobian.nnz()],
            hessian_values: vec![T::zero(); self.hessian.nnz()],
            scratch: TapeScratch::default(),
            local: vec![T::zero(); k],
            local_hess: vec![T::zero(); k * (k + 1) / 2],
        }
    }

    /// Builds the internal NLP view `x = (t, s)`, `c(x) = [c_E; c_I − s]`.
    pub fn to_nlp_form(&self) -> NlpView<'_> {
        NlpView::new(self)
    }

    fn check(&self, what: &'static str, expected: usize, found: usize) -> Result<(), ModelError> {
        if expected == found {
            Ok(())
        } else {
            Err(ModelError::DimensionMismatch { what, expected, found })
        }
    }

    fn value<T: Real>(f: &Function, t: &[T], s: &mut TapeScratch<T>) -> T {
        f.tapes.iter().map(|tp| tp.value(t, s)).fold(T::zero(), |a, b| a + b)
    }

    pub fn eval_objective<T: Real>(&self, t: &[T], ws: &mut DerivativeWorkspace<T>) -> Result<T, ModelError> {
        self.check("variables", self.n_t(), t.len())?;
        Ok(Self::value(&self.objective, t, &mut ws.scratch))
    }

    /// Returns `(c_E, c_I)`.
    pub fn eval_constraints<T: Real>(
        &self,
        t: &[T],
        ws: &mut DerivativeWorkspace<T>,
    ) -> Result<(Vec<T>, Vec<T>), ModelError> {
        let mut c = vec![T::zero(); self.m()];
        self.eval_constraints_into(t, ws, &mut c)?;
        let ci = c.split_off(self.m_eq);
        Ok((c, ci))
    }

    /// Writes `[c_E; c_I]` into `out`.
    pub fn eval_constraints_into<T: Real>(
        &self,
        t: &[T],
        ws: &mut DerivativeWorkspace<T>,
        out: &mut [T],
    ) -> Result<(), ModelError> {
        self.check("variables", self.n_t(), t.len())?;
        self.check("constraint output", self.m(), out.len())?;
        for (o, f) in out.iter_mut().zip(&self.rows) {
            *o = Self::value(f, t, &mut ws.scratch);
        }
        Ok(())
    }

    pub fn eval_gradient<T: Real>(&self, t: &[T], ws: &mut DerivativeWorkspace<T>) -> Result<Vec<T>, ModelError> {
        let mut g = vec![T::zero(); self.n_t()];
        self.eval_gradient_into(t, ws, &mut g)?;
        Ok(g)
    }

    /// Dense objective gradient; returns the objective value.
    pub fn eval_gradient_into<T: Real>(
        &self,
        t: &[T],
        ws: &mut DerivativeWorkspace<T>,
        g: &mut [T],
    ) -> Result<T, ModelError> {
        self.check("variables", self.n_t(), t.len())?;
        self.check("gradient output", self.n_t(), g.len())?;
        g.iter_mut().for_each(|v| *v = T::zero());
        let mut f = T::zero();
        for tp in &self.objective.tapes {
            let k = tp.vars().len();
            let local = &mut ws.local[..k];
            f += tp.gradient(t, &mut ws.scratch, local);
            for (l, &v) in tp.vars().iter().enumerate() {
                g[v] += local[l];
            }
        }
        Ok(f)
    }

    /// Jacobian values aligned with [`Model::jacobian_pattern`].
    pub fn eval_jacobian<'w, T: Real>(
        &self,
        t: &[T],
        ws: &'w mut DerivativeWorkspace<T>,
    ) -> Result<&'w [T], ModelError> {
        self.check("variables", self.n_t(), t.len())?;
        let DerivativeWorkspace { jacobian_values, scratch, local, .. } = ws;
        jacobian_values.iter_mut().for_each(|v| *v = T::zero());
        for (f, slots) in self.rows.iter().zip(&self.jac_slots) {
            for (tp, sl) in f.tapes.iter().zip(slots) {
                let k = tp.vars().len();
                let local = &mut local[..k];
                tp.gradient(t, scratch, local);
                for (l, &s) in sl.iter().enumerate() {
                    jacobian_values[s] += local[l];
                }
            }
        }
        Ok(&ws.jacobian_values)
    }

    /// Values of `obj_scale·∇²f − Σ yᵢ∇²cᵢ` aligned with [`Model::hessian_pattern`].
    pub fn eval_lag_hessian<'w, T: Real>(
        &self,
        t: &[T],
        y: &[T],
        obj_scale: T,
        ws: &'w mut DerivativeWorkspace<T>,
    ) -> Result<&'w [T], ModelError> {
        self.check("variables", self.n_t(), t.len())?;
        self.check("multipliers", self.m(), y.len())?;
        let DerivativeWorkspace { hessian_values, scratch, local_hess, .. } = ws;
        hessian_values.iter_mut().for_each(|v| *v = T::zero());
        let weights = std::iter::once(obj_scale).chain(y.iter().map(|&v| -v));
        let funcs = std::iter::once((&self.objective, &self.objective_hess)).chain(self.rows.iter().zip(&self.rows_hess));
        for (w, (f, slots)) in weights.zip(funcs) {
            if w == T::zero() {
                continue;
            }
            for (tp, sl) in f.tapes.iter().zip(slots) {
                if tp.is_linear() {
                    continue;
                }
                let buf = &mut local_hess[..sl.len()];
                buf.iter_mut().for_each(|v| *v = T::zero());
                tp.hessian_accumulate(t, w, scratch, buf);
                for (p, &s) in sl.iter().enumerate() {
                    hessian_values[s] += buf[p];
                }
            }
        }
        Ok(&ws.hessian_values)
    }

    /// Lagrangian Hessian as a symmetric matrix over `t`.
    pub fn lag_hessian_matrix<T: Real>(
        &self,
        t: &[T],
        y: &[T],
        obj_scale: T,
        ws: &mut DerivativeWorkspace<T>,
    ) -> Result<SparseSymMatrix<T>, ModelError> {
        let vals = self.eval_lag_hessian(t, y, obj_scale, ws)?.to_vec();
        let p = &self.hessian;
        Ok(SparseSymMatrix::from_csc(p.n, p.col_ptr.clone(), p.row_idx.clone(), vals).expect("valid hessian pattern"))
    }

    /// Dense row-major Jacobian, for tests and small diagnostics.
    pub fn jacobian_dense<T: Real>(&self, t: &[T], ws: &mut DerivativeWorkspace<T>) -> Result<Vec<T>, ModelError> {
        let n = self.n_t();
        let vals = self.eval_jacobian(t, ws)?.to_vec();
        let p = &self.jacobian;
        let mut d = vec![T::zero(); p.nrows * n];
        for i in 0..p.nrows {
            for k in p.row_ptr[i]..p.row_ptr[i + 1] {
                d[i * n + p.col_idx[k]] = vals[k];
            }
        }
        Ok(d)
    }
}
