use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{KnownOptimum, ProblemError};
use crate::model::{Expr, NcoProblem};

pub(super) const BASES: &[&str] = &[
    "hs6",
    "hs7",
    "hs21",
    "hs28",
    "hs35",
    "hs76",
    "convex-qp",
    "ncvx-qp",
    "opf-toy",
    "dup-rows",
    "dup-rows-hs6",
    "mpcc-basic",
    "mpcc-shift",
    "mpcc-slack",
    "mpcc-chain",
    "infeas-circle",
    "infeas-qp",
];

const INF: f64 = f64::INFINITY;

fn default_size(base: &str) -> Option<usize> {
    match base {
        "convex-qp" => Some(10),
        "ncvx-qp" => Some(12),
        "opf-toy" => Some(5),
        "mpcc-chain" => Some(4),
        _ => None,
    }
}

fn resolve_size(base: &str, size: Option<usize>) -> Result<Option<usize>, ProblemError> {
    let bad = |size, reason| ProblemError::InvalidSize { name: base.to_string(), size, reason };
    match (default_size(base), size) {
        (None, Some(n)) => Err(bad(n, "instance has a fixed size")),
        (None, None) => Ok(None),
        (Some(d), None) => Ok(Some(d)),
        (Some(_), Some(n)) => {
            let min = match base {
                "ncvx-qp" => 3,
                "opf-toy" => 2,
                _ => 1,
            };
            if n < min {
                Err(bad(n, "below the minimum size"))
            } else {
                Ok(Some(n))
            }
        }
    }
}

fn instance_name(base: &str, size: Option<usize>) -> String {
    match size {
        Some(n) => format!("{base}-{n}"),
        None => base.to_string(),
    }
}

pub(super) fn build_base(base: &str, size: Option<usize>, seed: u64) -> Result<NcoProblem, ProblemError> {
    if !BASES.contains(&base) {
        return Err(ProblemError::UnknownName(base.to_string()));
    }
    let size = resolve_size(base, size)?;
    let mut p = NcoProblem::new(instance_name(base, size));
    match base {
        "hs6" => hs6(&mut p, false),
        "dup-rows-hs6" => hs6(&mut p, true),
        "hs7" => {
            let t1 = p.add_var("t1", -INF, INF, Some(2.0));
            let t2 = p.add_var("t2", -INF, INF, Some(2.0));
            let q = 1.0 + t1.clone().powi(2);
            p.set_objective(q.clone().ln() - t2.clone());
            p.add_equality(q.powi(2) + t2.powi(2) - 4.0);
        }
        "hs21" => {
            let t1 = p.add_var("t1", 2.0, 50.0, Some(-1.0));
            let t2 = p.add_var("t2", -50.0, 50.0, Some(-1.0));
            p.set_objective(0.01 * t1.clone().powi(2) + t2.clone().powi(2) - 100.0);
            p.add_inequality(10.0 * t1 - t2 - 10.0, 0.0, INF);
        }
        "hs28" => {
            let t1 = p.add_var("t1", -INF, INF, Some(-4.0));
            let t2 = p.add_var("t2", -INF, INF, Some(1.0));
            let t3 = p.add_var("t3", -INF, INF, Some(1.0));
            p.set_objective((t1.clone() + t2.clone()).powi(2) + (t2.clone() + t3.clone()).powi(2));
            p.add_equality(t1 + 2.0 * t2 + 3.0 * t3 - 1.0);
        }
        "hs35" => {
            let t = p.add_vars("t", 3, 0.0, INF, Some(0.5));
            let (a, b, c) = (t[0].clone(), t[1].clone(), t[2].clone());
            p.set_objective(Expr::sum([
                Expr::constant(9.0),
                -8.0 * a.clone(),
                -6.0 * b.clone(),
                -4.0 * c.clone(),
                2.0 * a.clone().powi(2),
                2.0 * b.clone().powi(2),
                c.clone().powi(2),
                2.0 * a.clone() * b.clone(),
                2.0 * a.clone() * c.clone(),
            ]));
            p.add_inequality(3.0 - a - b - 2.0 * c, 0.0, INF);
        }
        "hs76" => {
            let t = p.add_vars("t", 4, 0.0, INF, Some(0.5));
            let (a, b, c, d) = (t[0].clone(), t[1].clone(), t[2].clone(), t[3].clone());
            p.set_objective(Expr::sum([
                a.clone().powi(2),
                0.5 * b.clone().powi(2),
                c.clone().powi(2),
                0.5 * d.clone().powi(2),
                -(a.clone() * c.clone()),
                c.clone() * d.clone(),
                -a.clone(),
                -3.0 * b.clone(),
                c.clone(),
                -d.clone(),
            ]));
            p.add_inequality(5.0 - a.clone() - 2.0 * b.clone() - c.clone() - d.clone(), 0.0, INF);
            p.add_inequality(4.0 - 3.0 * a - b.clone() - 2.0 * c.clone() + d, 0.0, INF);
            p.add_inequality(b + 4.0 * c - 1.5, 0.0, INF);
        }
        "convex-qp" => {
            let n = size.unwrap();
            let (d, a) = convex_qp_data(n);
            let t = p.add_vars("t", n, -INF, INF, None);
            p.set_objective(Expr::sum(
                (0..n).map(|i| 0.5 * d[i] * (t[i].clone() - a[i]).powi(2)),
            ));
            p.add_equality(Expr::sum(t.iter().cloned()) - 1.0);
        }
        "ncvx-qp" => ncvx_qp(&mut p, size.unwrap(), seed),
        "opf-toy" => opf_toy(&mut p, size.unwrap()),
        "dup-rows" => {
            let t1 = p.add_var("t1", -INF, INF, None);
            let t2 = p.add_var("t2", -INF, INF, None);
            p.set_objective(t1.clone().powi(2) + t2.clone().powi(2));
            let row = t1 + t2 - 1.0;
            p.add_equality(row.clone());
            p.add_equality(row);
        }
        "mpcc-basic" => {
            let t1 = p.add_var("t1", 0.0, INF, Some(1.0));
            let t2 = p.add_var("t2", 0.0, INF, Some(0.5));
            p.set_objective((t1.clone() - 1.0).powi(2) + (t2.clone() - 1.0).powi(2));
            p.add_inequality(t1 * t2, -INF, 0.0);
        }
        "mpcc-shift" => {
            let t1 = p.add_var("t1", 0.0, INF, Some(0.5));
            let t2 = p.add_var("t2", 0.0, INF, Some(0.5));
            p.set_objective((t1.clone() - 1.0).powi(2) + (t2.clone() + 1.0).powi(2));
            p.add_inequality(t1 * t2, -INF, 0.0);
        }
        "mpcc-slack" => {
            let t1 = p.add_var("t1", 0.0, INF, Some(0.5));
            let t2 = p.add_var("t2", -INF, INF, Some(4.0));
            p.set_objective((t1.clone() - 1.0).powi(2) + (t2.clone() - 2.0).powi(2));
            p.add_inequality(t2.clone() - 3.0, 0.0, INF);
            p.add_inequality(t1 * (t2 - 3.0), -INF, 0.0);
        }
        "mpcc-chain" => {
            let n = size.unwrap();
            let mut obj = Vec::new();
            for i in 0..n {
                let (sa, sb) = if i % 2 == 0 { (1.0, 0.5) } else { (0.5, 1.0) };
                let a = p.add_var(format!("a{i}"), 0.0, INF, Some(sa));
                let b = p.add_var(format!("b{i}"), 0.0, INF, Some(sb));
                obj.push((a.clone() - 1.0).powi(2));
                obj.push((b.clone() - 1.0).powi(2));
                p.add_inequality(a * b, -INF, 0.0);
            }
            p.set_objective(Expr::sum(obj));
        }
        "infeas-circle" => {
            let t1 = p.add_var("t1", -INF, INF, None);
            p.set_objective(t1.clone());
            p.add_equality(t1.powi(2) + 1.0);
        }
        "infeas-qp" => {
            let t1 = p.add_var("t1", -INF, INF, None);
            let t2 = p.add_var("t2", -INF, INF, None);
            p.set_objective(t1.clone().powi(2) + t2.clone().powi(2));
            p.add_equality(t1.clone() + t2.clone() - 1.0);
            p.add_equality(t1 + t2 - 2.0);
        }
        _ => unreachable!(),
    }
    Ok(p)
}

fn hs6(p: &mut NcoProblem, duplicated: bool) {
    let t1 = p.add_var("t1", -INF, INF, Some(-1.2));
    let t2 = p.add_var("t2", -INF, INF, Some(1.0));
    p.set_objective((1.0 - t1.clone()).powi(2));
    let c = 10.0 * (t2 - t1.powi(2));
    if duplicated {
        p.add_equality(c.clone());
    }
    p.add_equality(c);
}

fn convex_qp_data(n: usize) -> (Vec<f64>, Vec<f64>) {
    let d = (0..n).map(|i| 1.0 + 0.5 * (i % 4) as f64).collect();
    let a = (0..n).map(|i| ((i + 1) as f64).sin()).collect();
    (d, a)
}

struct NcvxData {
    h: DMatrix<f64>,
    g: Vec<f64>,
    /// Rows of `[I B]`: `(row, col, value)`.
    b: Vec<(usize, usize, f64)>,
    e: Vec<f64>,
    p: usize,
    tstar: Vec<f64>,
    value: f64,
    start: Vec<f64>,
}

/// `min ½tᵀHt + gᵀt  s.t.  u + Bv = e`, with `H = diag(−D, BᵀDB + M)` for
/// `t = (u, v)`. `H` is indefinite but the reduced Hessian is `M ≻ 0`.
fn ncvx_data(n: usize, seed: u64) -> NcvxData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6e63_7671_7000);
    let p = (n / 3).max(1);
    let q = n - p;
    let mut b = Vec::new();
    let mut bd = DMatrix::<f64>::zeros(p, q);
    for i in 0..p {
        let c0 = i % q;
        let c1 = rng.gen_range(0..q);
        for c in [c0, c1] {
            if bd[(i, c)] == 0.0 {
                let v = rng.gen_range(0.2..1.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                bd[(i, c)] = v;
                b.push((i, c, v));
            }
        }
    }
    let dvals: Vec<f64> = (0..p).map(|_| rng.gen_range(0.5..1.5)).collect();
    let mut m = DMatrix::<f64>::zeros(q, q);
    for j in 0..q {
        m[(j, j)] = rng.gen_range(1.0..2.0);
        if j + 1 < q {
            let off = rng.gen_range(-0.2..0.2);
            m[(j, j + 1)] = off;
            m[(j + 1, j)] = off;
        }
    }
    let dm = DMatrix::from_diagonal(&DVector::from_vec(dvals.clone()));
    let hvv = bd.transpose() * &dm * &bd + m;
    let mut h = DMatrix::<f64>::zeros(n, n);
    for i in 0..p {
        h[(i, i)] = -dvals[i];
    }
    h.view_mut((p, p), (q, q)).copy_from(&hvv);
    let g: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let e: Vec<f64> = (0..p).map(|_| rng.gen_range(-1.0..1.0)).collect();

    // dense KKT oracle
    let mut k = DMatrix::<f64>::zeros(n + p, n + p);
    k.view_mut((0, 0), (n, n)).copy_from(&h);
    for i in 0..p {
        k[(n + i, i)] = 1.0;
        k[(i, n + i)] = 1.0;
    }
    for &(i, c, v) in &b {
        k[(n + i, p + c)] = v;
        k[(p + c, n + i)] = v;
    }
    let mut rhs = DVector::<f64>::zeros(n + p);
    for i in 0..n {
        rhs[i] = -g[i];
    }
    for i in 0..p {
        rhs[n + i] = e[i];
    }
    let sol = k.lu().solve(&rhs).expect("nonsingular KKT matrix");
    let tstar: Vec<f64> = (0..n).map(|i| sol[i]).collect();
    let tv = DVector::from_vec(tstar.clone());
    let value = 0.5 * tv.dot(&(&h * &tv)) + tv.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>();
    let start = tstar.iter().map(|&t| t + rng.gen_range(-3.0..3.0)).collect();
    NcvxData { h, g, b, e, p, tstar, value, start }
}

fn ncvx_qp(pr: &mut NcoProblem, n: usize, seed: u64) {
    let d = ncvx_data(n, seed);
    let t: Vec<Expr> = (0..n)
        .map(|i| pr.add_var(format!("t{i}"), d.tstar[i] - 10.0, d.tstar[i] + 10.0, Some(d.start[i])))
        .collect();
    let mut terms = Vec::new();
    for j in 0..n {
        for i in j..n {
            let hij = d.h[(i, j)];
            if hij == 0.0 {
                continue;
            }
            if i == j {
                terms.push(0.5 * hij * t[i].clone().powi(2));
            } else {
                terms.push(hij * t[i].clone() * t[j].clone());
            }
        }
        if d.g[j] != 0.0 {
            terms.push(d.g[j] * t[j].clone());
        }
    }
    pr.set_objective(Expr::sum(terms));
    let mut rows: Vec<Vec<Expr>> = (0..d.p).map(|i| vec![t[i].clone()]).collect();
    for &(i, c, v) in &d.b {
        rows[i].push(v * t[d.p + c].clone());
    }
    for (i, r) in rows.into_iter().enumerate() {
        pr.add_equality(Expr::sum(r) - d.e[i]);
    }
}

struct OpfData {
    demand: Vec<f64>,
    cost: Vec<f64>,
    susceptance: f64,
    flow_limit: f64,
    p: Vec<f64>,
    theta: Vec<f64>,
    value: f64,
}

/// Path network with buses `0..N`, generation and demand at every bus.
/// Summing the balance rows cancels all line terms, so the generation
/// dispatch solves `min Σ ½cᵢpᵢ² s.t. Σp = Σd` in closed form.
fn opf_data(n: usize) -> OpfData {
    let demand: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * (1.3 * i as f64).sin()).collect();
    let cost: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * (0.7 * i as f64).cos()).collect();
    let total: f64 = demand.iter().sum();
    let inv: f64 = cost.iter().map(|c| 1.0 / c).sum();
    let lambda = total / inv;
    let p: Vec<f64> = cost.iter().map(|c| lambda / c).collect();
    let mut flow = Vec::with_capacity(n - 1);
    let mut acc = 0.0;
    for i in 0..n - 1 {
        acc += p[i] - demand[i];
        flow.push(acc);
    }
    let fmax = flow.iter().fold(0.0f64, |a, f| a.max(f.abs()));
    let susceptance = (4.0 * fmax).max(5.0);
    let flow_limit = 2.0 * fmax + 1.0;
    let mut theta = vec![0.0; n];
    for i in 0..n - 1 {
        theta[i + 1] = theta[i] - (flow[i] / susceptance).asin();
    }
    OpfData { demand, cost, susceptance, flow_limit, p, theta, value: 0.5 * total * total / inv }
}

fn opf_toy(pr: &mut NcoProblem, n: usize) {
    let d = opf_data(n);
    let pmax = 3.0 * d.p.iter().fold(0.0f64, |a, &b| a.max(b));
    let theta: Vec<Expr> = (0..n)
        .map(|i| {
            if i == 0 {
                pr.add_var("theta0", 0.0, 0.0, None)
            } else {
                pr.add_var(format!("theta{i}"), -INF, INF, Some(0.0))
            }
        })
        .collect();
    let p: Vec<Expr> = (0..n).map(|i| pr.add_var(format!("p{i}"), 0.0, pmax, None)).collect();
    pr.set_objective(Expr::sum((0..n).map(|i| 0.5 * d.cost[i] * p[i].clone().powi(2))));
    let line = |i: usize, j: usize| d.susceptance * (theta[i].clone() - theta[j].clone()).sin();
    for i in 0..n {
        let mut terms = vec![p[i].clone(), Expr::constant(-d.demand[i])];
        if i > 0 {
            terms.push(-line(i, i - 1));
        }
        if i + 1 < n {
            terms.push(-line(i, i + 1));
        }
        pr.add_equality(Expr::sum(terms));
    }
    let max_angle = std::f64::consts::FRAC_PI_3;
    for i in 0..n - 1 {
        pr.add_inequality(line(i, i + 1), -d.flow_limit, d.flow_limit);
        pr.add_inequality(theta[i].clone() - theta[i + 1].clone(), -max_angle, max_angle);
    }
}

pub(super) fn known_optimum(base: &str, size: Option<usize>, seed: u64) -> Option<KnownOptimum> {
    let size = resolve_size(base, size).ok()?;
    let ko = |value: f64, argmin: Option<Vec<f64>>, provenance| Some(KnownOptimum { value, tol: 1e-6, argmin, provenance });
    match base {
        "hs6" | "dup-rows-hs6" => ko(0.0, Some(vec![1.0, 1.0]), "analytic"),
        "hs7" => ko(-(3.0f64).sqrt(), Some(vec![0.0, 3.0f64.sqrt()]), "analytic"),
        "hs21" => ko(-99.96, Some(vec![2.0, 0.0]), "analytic"),
        "hs28" => ko(0.0, Some(vec![0.5, -0.5, 0.5]), "analytic"),
        "hs35" => ko(1.0 / 9.0, Some(vec![4.0 / 3.0, 7.0 / 9.0, 4.0 / 9.0]), "analytic"),
        "hs76" => ko(-103.0 / 22.0, Some(vec![3.0 / 11.0, 23.0 / 11.0, 0.0, 6.0 / 11.0]), "analytic QP active set"),
        "convex-qp" => {
            let n = size.unwrap();
            let (d, a) = convex_qp_data(n);
            let inv: f64 = d.iter().map(|x| 1.0 / x).sum();
            let lambda = (1.0 - a.iter().sum::<f64>()) / inv;
            let t = (0..n).map(|i| a[i] + lambda / d[i]).collect();
            ko(0.5 * lambda * lambda * inv, Some(t), "closed form")
        }
        "ncvx-qp" => {
            let d = ncvx_data(size.unwrap(), seed);
            ko(d.value, Some(d.tstar), "dense KKT oracle")
        }
        "opf-toy" => {
            let d = opf_data(size.unwrap());
            let mut t = d.theta.clone();
            t.extend(d.p.iter().copied());
            ko(d.value, Some(t), "closed form dispatch")
        }
        "dup-rows" => ko(0.5, Some(vec![0.5, 0.5]), "analytic"),
        "mpcc-basic" => ko(1.0, None, "analytic, two minimizers"),
        "mpcc-shift" => ko(1.0, Some(vec![1.0, 0.0]), "analytic"),
        "mpcc-slack" => ko(1.0, Some(vec![1.0, 3.0]), "analytic"),
        "mpcc-chain" => ko(size.unwrap() as f64, None, "analytic, 2^n minimizers"),
        _ => None,
    }
}
