use nalgebra::{DMatrix, DVector, SymmetricEigen};
use ncl_core::kkt::{assemble, KktData, KktFormulation, NewtonStep};
use ncl_core::model::NlpView;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Owned storage behind a `KktData`.
#[derive(Debug, Clone)]
pub struct Point {
    pub n_t: usize,
    pub m_eq: usize,
    pub x: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub r: Vec<f64>,
    pub y: Vec<f64>,
    pub z_l: Vec<f64>,
    pub z_u: Vec<f64>,
    pub y_k: Vec<f64>,
    pub rho: f64,
    pub mu: f64,
    pub grad: Vec<f64>,
    pub c: Vec<f64>,
    pub jac_row_ptr: Vec<usize>,
    pub jac_col: Vec<usize>,
    pub jac_val: Vec<f64>,
    pub hess_col_ptr: Vec<usize>,
    pub hess_row: Vec<usize>,
    pub hess_val: Vec<f64>,
}

impl Point {
    pub fn data(&self) -> KktData<'_> {
        KktData {
            n_t: self.n_t,
            m_eq: self.m_eq,
            x: &self.x,
            lower: &self.lower,
            upper: &self.upper,
            r: &self.r,
            y: &self.y,
            z_l: &self.z_l,
            z_u: &self.z_u,
            y_k: &self.y_k,
            rho: self.rho,
            mu: self.mu,
            grad: &self.grad,
            c: &self.c,
            jac_row_ptr: &self.jac_row_ptr,
            jac_col: &self.jac_col,
            jac_val: &self.jac_val,
            hess_col_ptr: &self.hess_col_ptr,
            hess_row: &self.hess_row,
            hess_val: &self.hess_val,
        }
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn m(&self) -> usize {
        self.c.len()
    }

    /// Dense lower-triangle-expanded Hessian over t.
    pub fn hess_dense(&self) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(self.n_t, self.n_t);
        for j in 0..self.n_t {
            for k in self.hess_col_ptr[j]..self.hess_col_ptr[j + 1] {
                let i = self.hess_row[k];
                h[(i, j)] = self.hess_val[k];
                h[(j, i)] = self.hess_val[k];
            }
        }
        h
    }

    pub fn jac_dense(&self) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(self.m(), self.n());
        for i in 0..self.m() {
            for k in self.jac_row_ptr[i]..self.jac_row_ptr[i + 1] {
                j[(i, self.jac_col[k])] = self.jac_val[k];
            }
        }
        j
    }
}

/// Random interior point. `convexity` shifts the Hessian diagonal; negative
/// values make indefinite systems likely.
pub fn random_point(seed: u64, n_t: usize, m_eq: usize, m_in: usize, convexity: f64) -> Point {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = n_t + m_in;
    let m = m_eq + m_in;
    let mut lower = vec![f64::NEG_INFINITY; n];
    let mut upper = vec![f64::INFINITY; n];
    let mut x = vec![0.0; n];
    for i in 0..n {
        let kind = rng.gen_range(0..4);
        let base: f64 = rng.gen_range(-2.0..2.0);
        if kind == 0 || kind == 1 {
            lower[i] = base;
        }
        if kind == 0 || kind == 2 {
            upper[i] = base + rng.gen_range(0.5..3.0);
        }
        x[i] = match (lower[i].is_finite(), upper[i].is_finite()) {
            (true, true) => lower[i] + rng.gen_range(0.1..0.9) * (upper[i] - lower[i]),
            (true, false) => lower[i] + rng.gen_range(0.05..2.0),
            (false, true) => upper[i] - rng.gen_range(0.05..2.0),
            (false, false) => base,
        };
    }
    let z_l: Vec<f64> = (0..n).map(|i| if lower[i].is_finite() { rng.gen_range(0.01..3.0) } else { 0.0 }).collect();
    let z_u: Vec<f64> = (0..n).map(|i| if upper[i].is_finite() { rng.gen_range(0.01..3.0) } else { 0.0 }).collect();

    let mut h = DMatrix::<f64>::zeros(n_t, n_t);
    for i in 0..n_t {
        for j in 0..=i {
            if i == j || rng.gen_bool(0.4) {
                let v = rng.gen_range(-1.0..1.0);
                h[(i, j)] = v;
                h[(j, i)] = v;
            }
        }
        h[(i, i)] += convexity;
    }
    let mut hess_col_ptr = vec![0];
    let mut hess_row = Vec::new();
    let mut hess_val = Vec::new();
    for j in 0..n_t {
        for i in j..n_t {
            if h[(i, j)] != 0.0 || i == j {
                hess_row.push(i);
                hess_val.push(h[(i, j)]);
            }
        }
        hess_col_ptr.push(hess_row.len());
    }

    let mut jac_row_ptr = vec![0];
    let mut jac_col = Vec::new();
    let mut jac_val = Vec::new();
    for i in 0..m {
        for j in 0..n_t {
            if rng.gen_bool(0.6) {
                jac_col.push(j);
                jac_val.push(rng.gen_range(-2.0..2.0));
            }
        }
        if i >= m_eq {
            jac_col.push(n_t + i - m_eq);
            jac_val.push(-1.0);
        }
        jac_row_ptr.push(jac_col.len());
    }
    let vecm = |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect() };
    let r = vecm(&mut rng);
    let y = vecm(&mut rng);
    let y_k = vecm(&mut rng);
    let c = vecm(&mut rng);
    let grad = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Point {
        n_t,
        m_eq,
        x,
        lower,
        upper,
        r,
        y,
        z_l,
        z_u,
        y_k,
        rho: rng.gen_range(1.0..100.0),
        mu: rng.gen_range(1e-3..1.0),
        grad,
        c,
        jac_row_ptr,
        jac_col,
        jac_val,
        hess_col_ptr,
        hess_row,
        hess_val,
    }
}

/// Dense unsymmetric Newton system over `(Δx, Δr, Δy, Δz_l, Δz_u)` with
/// primal regularization `delta` and penalty `ρ + δ`. Absent bounds get the
/// row `Δz = 0`.
pub fn dense_k3(p: &Point, delta: f64) -> (DMatrix<f64>, DVector<f64>) {
    let (n, m, nt) = (p.n(), p.m(), p.n_t);
    let rho_hat = p.rho + delta;
    let dim = 3 * n + 2 * m;
    let (ox, or, oy, ol, ou) = (0, n, n + m, n + 2 * m, 2 * n + 2 * m);
    let mut a = DMatrix::zeros(dim, dim);
    let mut b = DVector::zeros(dim);
    let h = p.hess_dense();
    let jac = p.jac_dense();
    let jty = jac.transpose() * DVector::from_vec(p.y.clone());
    for i in 0..n {
        for j in 0..n {
            if i < nt && j < nt {
                a[(ox + i, ox + j)] = h[(i, j)];
            }
        }
        a[(ox + i, ox + i)] += delta;
        for k in 0..m {
            a[(ox + i, oy + k)] = -jac[(k, i)];
        }
        a[(ox + i, ol + i)] = -1.0;
        a[(ox + i, ou + i)] = 1.0;
        b[ox + i] = -(p.grad[i] - jty[i] - p.z_l[i] + p.z_u[i]);
    }
    for k in 0..m {
        a[(or + k, or + k)] = rho_hat;
        a[(or + k, oy + k)] = -1.0;
        b[or + k] = -(p.y_k[k] + rho_hat * p.r[k] - p.y[k]);
        for j in 0..n {
            a[(oy + k, ox + j)] = jac[(k, j)];
        }
        a[(oy + k, or + k)] = 1.0;
        b[oy + k] = -(p.c[k] + p.r[k]);
    }
    for i in 0..n {
        if p.lower[i].is_finite() {
            let g = p.x[i] - p.lower[i];
            a[(ol + i, ox + i)] = p.z_l[i];
            a[(ol + i, ol + i)] = g;
            b[ol + i] = -(p.z_l[i] * g - p.mu);
        } else {
            a[(ol + i, ol + i)] = 1.0;
        }
        if p.upper[i].is_finite() {
            let g = p.upper[i] - p.x[i];
            a[(ou + i, ox + i)] = -p.z_u[i];
            a[(ou + i, ou + i)] = g;
            b[ou + i] = -(p.z_u[i] * g - p.mu);
        } else {
            a[(ou + i, ou + i)] = 1.0;
        }
    }
    (a, b)
}

pub fn dense_step(p: &Point, delta: f64) -> Vec<f64> {
    let (a, b) = dense_k3(p, delta);
    a.lu().solve(&b).expect("nonsingular K3").iter().copied().collect()
}

pub fn flatten(s: &NewtonStep) -> Vec<f64> {
    [&s.dx[..], &s.dr, &s.dy, &s.dz_l, &s.dz_u].concat()
}

pub fn dense_inertia(p: &Point, form: KktFormulation, delta: f64) -> (usize, usize, usize) {
    let (mat, _) = assemble(form, &p.data(), delta);
    let k = mat.dim();
    let d = DMatrix::from_row_slice(k, k, &mat.to_dense());
    let ev = SymmetricEigen::new(d).eigenvalues;
    let tol = 1e-10 * ev.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let pos = ev.iter().filter(|&&v| v > tol).count();
    let neg = ev.iter().filter(|&&v| v < -tol).count();
    (pos, neg, k - pos - neg)
}

pub fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

pub fn tiny_point(h: Vec<f64>, jac: Vec<f64>, rho: f64) -> Point {
    // unbounded variables, one equality, x = 0
    let n = h.len();
    let mut hess_col_ptr = vec![0];
    let mut hess_row = Vec::new();
    let mut hess_val = Vec::new();
    for (j, v) in h.iter().enumerate() {
        hess_row.push(j);
        hess_val.push(*v);
        hess_col_ptr.push(j + 1);
    }
    Point {
        n_t: n,
        m_eq: 1,
        x: vec![0.0; n],
        lower: vec![f64::NEG_INFINITY; n],
        upper: vec![f64::INFINITY; n],
        r: vec![0.0],
        y: vec![0.0],
        z_l: vec![0.0; n],
        z_u: vec![0.0; n],
        y_k: vec![0.0],
        rho,
        mu: 0.1,
        grad: vec![1.0; n],
        c: vec![0.5],
        jac_row_ptr: vec![0, n],
        jac_col: (0..n).collect(),
        jac_val: jac,
        hess_col_ptr,
        hess_row,
        hess_val,
    }
}

/// Relative errors of the displayed block LDLᵀ products against the
/// permuted `K2` (order `r, y, x`) and `K2r` (order `y, x`).
pub fn block_ldl_errors(p: &Point, delta: f64) -> (f64, f64) {
    let (n, m) = (p.n(), p.m());
    let rho_hat = p.rho + delta;
    let theta = 1.0 / rho_hat;
    let (k2, _) = assemble(KktFormulation::K2, &p.data(), delta);
    let k = DMatrix::from_row_slice(n + 2 * m, n + 2 * m, &k2.to_dense());
    // reorder (x, r, y) -> (r, y, x)
    let order: Vec<usize> = (n..n + m).chain(n + m..n + 2 * m).chain(0..n).collect();
    let kp = DMatrix::from_fn(order.len(), order.len(), |i, j| k[(order[i], order[j])]);

    let jac = p.jac_dense();
    let mut hs = DMatrix::zeros(n, n);
    let h = p.hess_dense();
    let sigma = p.data().sigma();
    for i in 0..n {
        for j in 0..n {
            if i < p.n_t && j < p.n_t {
                hs[(i, j)] = h[(i, j)];
            }
        }
        hs[(i, i)] += sigma[i] + delta;
    }
    let dim = n + 2 * m;
    let mut l = DMatrix::identity(dim, dim);
    let mut d = DMatrix::zeros(dim, dim);
    for i in 0..m {
        l[(m + i, i)] = theta;
        d[(i, i)] = rho_hat;
        d[(m + i, m + i)] = -theta;
    }
    for i in 0..n {
        for k in 0..m {
            l[(2 * m + i, m + k)] = -rho_hat * jac[(k, i)];
        }
    }
    let schur = &hs + rho_hat * jac.transpose() * &jac;
    d.view_mut((2 * m, 2 * m), (n, n)).copy_from(&schur);
    let rebuilt = &l * d * l.transpose();
    let err_k2 = (&rebuilt - &kp).abs().max() / kp.abs().max();

    // K2r in (y, x) order
    let (k2r, _) = assemble(KktFormulation::K2r, &p.data(), delta);
    let k = DMatrix::from_row_slice(n + m, n + m, &k2r.to_dense());
    let order: Vec<usize> = (n..n + m).chain(0..n).collect();
    let kp = DMatrix::from_fn(n + m, n + m, |i, j| k[(order[i], order[j])]);
    let mut l = DMatrix::identity(n + m, n + m);
    let mut d = DMatrix::zeros(n + m, n + m);
    for i in 0..m {
        d[(i, i)] = -theta;
    }
    for i in 0..n {
        for k in 0..m {
            l[(m + i, k)] = -rho_hat * jac[(k, i)];
        }
    }
    d.view_mut((m, m), (n, n)).copy_from(&schur);
    let rebuilt = &l * d * l.transpose();
    let err_k2r = (&rebuilt - &kp).abs().max() / kp.abs().max();
    (err_k2, err_k2r)
}

/// The three inertia statements: `K2` has `(n+m, m, 0)`, `K2r` has
/// `(n, m, 0)`, `K1s` is positive definite.
pub fn inertia_statements(p: &Point, delta: f64) -> [bool; 3] {
    let (n, m) = (p.n(), p.m());
    [
        dense_inertia(p, KktFormulation::K2, delta) == (n + m, m, 0),
        dense_inertia(p, KktFormulation::K2r, delta) == (n, m, 0),
        dense_inertia(p, KktFormulation::K1s, delta) == (p.n_t, 0, 0),
    ]
}

/// A Newton system of a registry model at a random interior point of its
/// NLP view, with random multipliers, `ρ` and `μ`.
pub fn point_from_view(view: &mut NlpView, rng: &mut ChaCha8Rng) -> Point {
    let (n, m) = (view.n(), view.m());
    let (lower, upper) = (view.lower().to_vec(), view.upper().to_vec());
    let mut x0 = view.initial_x();
    for i in 0..n {
        x0[i] = match (lower[i].is_finite(), upper[i].is_finite()) {
            (true, true) => lower[i] + rng.gen_range(0.05..0.95) * (upper[i] - lower[i]),
            (true, false) => lower[i] + rng.gen_range(0.05..2.0),
            (false, true) => upper[i] - rng.gen_range(0.05..2.0),
            (false, false) => x0[i] + rng.gen_range(-1.0..1.0),
        };
    }
    let bound_mult = |b: &[f64], rng: &mut ChaCha8Rng| -> Vec<f64> {
        b.iter().map(|v| if v.is_finite() { rng.gen_range(0.01..3.0) } else { 0.0 }).collect()
    };
    let z_l = bound_mult(&lower, rng);
    let z_u = bound_mult(&upper, rng);
    let vecm = |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect() };
    let (r, y, y_k) = (vecm(rng), vecm(rng), vecm(rng));
    let mut grad = vec![0.0; n];
    view.gradient(&x0, &mut grad);
    let mut c = vec![0.0; m];
    view.constraints(&x0, &mut c);
    let mut jac_val = vec![0.0; view.jac_col().len()];
    view.jacobian(&x0, &mut jac_val);
    let mut hess_val = vec![0.0; view.hess_row().len()];
    view.hessian(&x0, &y, &mut hess_val);
    Point {
        n_t: view.n_t(),
        m_eq: view.m_eq(),
        x: x0,
        lower,
        upper,
        r,
        y,
        z_l,
        z_u,
        y_k,
        rho: 10f64.powf(rng.gen_range(0.0..4.0)),
        mu: 10f64.powf(rng.gen_range(-4.0..0.0)),
        grad,
        c,
        jac_row_ptr: view.jac_row_ptr().to_vec(),
        jac_col: view.jac_col().to_vec(),
        jac_val,
        hess_col_ptr: view.hess_col_ptr().to_vec(),
        hess_row: view.hess_row().to_vec(),
        hess_val,
    }
}
