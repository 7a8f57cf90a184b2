use nalgebra::{DMatrix, DVector};
use ncl_core::ipm::{
    fraction_to_boundary, ftb_tau, residual, Evaluation, InnerError, InnerLog, InnerOptions, InnerSolver, Iterate,
    Subproblem,
};
use ncl_core::kkt::{k3_residual, KktData, KktOptions, NewtonStep};
use ncl_core::model::NcoProblem;
use ncl_core::problems::build_named;
use ncl_core::{Expr, KktFormulation};

const INF: f64 = f64::INFINITY;

fn solver(form: KktFormulation) -> InnerSolver {
    InnerSolver::new(form, KktOptions::default(), InnerOptions::default())
}

// min ½xᵀQx + qᵀx  s.t.  Ax = b, 0 ≤ x ≤ 10
const Q: [[f64; 4]; 4] = [[4.0, 1.0, 0.0, 0.5], [1.0, 3.0, 0.5, 0.0], [0.0, 0.5, 2.0, 0.3], [0.5, 0.0, 0.3, 5.0]];
const QV: [f64; 4] = [-1.0, 2.0, -3.0, 0.5];
const A: [[f64; 4]; 2] = [[1.0, 1.0, 1.0, 1.0], [1.0, -1.0, 2.0, 0.0]];
const B: [f64; 2] = [2.0, 1.0];

fn convex_qp() -> NcoProblem {
    let mut p = NcoProblem::new("qp4");
    let x = p.add_vars("x", 4, 0.0, 10.0, Some(1.0));
    let mut terms = Vec::new();
    for i in 0..4 {
        terms.push(QV[i] * x[i].clone());
        for j in 0..4 {
            if Q[i][j] != 0.0 {
                terms.push(0.5 * Q[i][j] * x[i].clone() * x[j].clone());
            }
        }
    }
    p.set_objective(Expr::sum(terms));
    for (row, b) in A.iter().zip(B) {
        p.add_equality(Expr::sum((0..4).map(|j| row[j] * x[j].clone())) - b);
    }
    p
}

/// Damped dense Newton on the five-block `F` of the convex QP.
fn dense_newton_oracle(rho: f64, mu: f64, y_k: &[f64]) -> Vec<f64> {
    let (n, m) = (4usize, 2usize);
    let (l, u) = (0.0, 10.0);
    let mut x = DVector::from_element(n, 1.0);
    let mut r = DVector::zeros(m);
    let mut y = DVector::zeros(m);
    let mut zl = DVector::from_fn(n, |i, _| mu / (x[i] - l));
    let mut zu = DVector::from_fn(n, |i, _| mu / (u - x[i]));
    let q = DMatrix::from_fn(n, n, |i, j| Q[i][j]);
    let a = DMatrix::from_fn(m, n, |i, j| A[i][j]);
    let qv = DVector::from_column_slice(&QV);
    let b = DVector::from_column_slice(&B);
    let yk = DVector::from_column_slice(y_k);
    let dim = 3 * n + 2 * m;
    for _ in 0..100 {
        let mut f = DVector::zeros(dim);
        f.rows_mut(0, n).copy_from(&(&q * &x + &qv - a.transpose() * &y - &zl + &zu));
        f.rows_mut(n, m).copy_from(&(&yk + rho * &r - &y));
        f.rows_mut(n + m, m).copy_from(&(&a * &x - &b + &r));
        for i in 0..n {
            f[n + 2 * m + i] = zl[i] * (x[i] - l) - mu;
            f[2 * n + 2 * m + i] = zu[i] * (u - x[i]) - mu;
        }
        if f.amax() < 1e-14 {
            break;
        }
        let mut jm = DMatrix::zeros(dim, dim);
        let (ox, or, oy, ol, ou) = (0, n, n + m, n + 2 * m, 2 * n + 2 * m);
        jm.view_mut((ox, ox), (n, n)).copy_from(&q);
        jm.view_mut((ox, oy), (n, m)).copy_from(&(-a.transpose()));
        for i in 0..n {
            jm[(ox + i, ol + i)] = -1.0;
            jm[(ox + i, ou + i)] = 1.0;
            jm[(ol + i, ox + i)] = zl[i];
            jm[(ol + i, ol + i)] = x[i] - l;
            jm[(ou + i, ox + i)] = -zu[i];
            jm[(ou + i, ou + i)] = u - x[i];
        }
        for i in 0..m {
            jm[(or + i, or + i)] = rho;
            jm[(or + i, oy + i)] = -1.0;
            jm[(oy + i, or + i)] = 1.0;
        }
        jm.view_mut((oy, ox), (m, n)).copy_from(&a);
        let d = jm.lu().solve(&(-f)).unwrap();
        let mut alpha = 1.0f64;
        for i in 0..n {
            for (v, dv) in [(x[i] - l, d[ox + i]), (u - x[i], -d[ox + i]), (zl[i], d[ol + i]), (zu[i], d[ou + i])] {
                if dv < 0.0 {
                    alpha = alpha.min(-0.99 * v / dv);
                }
            }
        }
        x += alpha * d.rows(ox, n);
        r += alpha * d.rows(or, m);
        y += alpha * d.rows(oy, m);
        zl += alpha * d.rows(ol, n);
        zu += alpha * d.rows(ou, n);
    }
    x.iter().copied().collect()
}

fn start(view: &ncl_core::model::NlpView, mu: f64) -> Iterate {
    let mut v = view.clone();
    let x0 = v.initial_x();
    Iterate::initial(view.lower(), view.upper(), &x0, vec![0.0; view.m()], mu)
}

#[test]
fn residual_vanishes_at_a_constructed_fixed_point() {
    // pick the point, then choose the linear objective term that makes it stationary
    let (rho, mu) = (10.0, 0.01);
    let x = [0.3, 1.7, -0.4];
    let y_k = [0.5, -1.0];
    let c = [x[0] * x[1] - 1.0, x[0] + x[2] * x[2]];
    let r: Vec<f64> = c.iter().map(|v| -v).collect();
    let y: Vec<f64> = (0..2).map(|i| y_k[i] + rho * r[i]).collect();
    let (l0, u1) = (0.0, 2.0);
    let zl0 = mu / (x[0] - l0);
    let zu1 = mu / (u1 - x[1]);
    // ∇c rows: [x1, x0, 0], [1, 0, 2x2]
    let jty = [y[0] * x[1] + y[1], y[0] * x[0], y[1] * 2.0 * x[2]];
    let g = [jty[0] + zl0 - x[0], jty[1] - zu1 - x[1], jty[2] - x[2]];

    let mut p = NcoProblem::new("fixed-point");
    let v: Vec<Expr> = vec![
        p.add_var("a", l0, INF, None),
        p.add_var("b", -INF, u1, None),
        p.add_var("c", -INF, INF, None),
    ];
    p.set_objective(Expr::sum((0..3).map(|i| 0.5 * v[i].clone() * v[i].clone() + g[i] * v[i].clone())));
    p.add_equality(v[0].clone() * v[1].clone() - 1.0);
    p.add_equality(v[0].clone() + v[2].clone() * v[2].clone());
    let m = p.compile().unwrap();
    let mut view = m.to_nlp_form();
    let w = Iterate {
        x: x.to_vec(),
        r,
        y,
        z_l: vec![zl0, 0.0, 0.0],
        z_u: vec![0.0, zu1, 0.0],
    };
    let res = residual(&mut view, &w, &Subproblem { rho, mu, y_k: &y_k });
    for (k, b) in res.block_norms().iter().enumerate() {
        assert!(*b <= 1e-12, "block {k}: {b:e}");
    }
    assert_eq!(res.compl_l.len(), 3);
    assert_eq!(res.penalty.len(), 2);
}

#[test]
fn penalty_and_primal_blocks_vanish_on_the_multiplier_identity() {
    let m = build_named("hs6", 0).unwrap().compile().unwrap();
    let mut view = m.to_nlp_form();
    let x = vec![0.4, -2.0];
    let mut c = vec![0.0];
    view.constraints(&x, &mut c);
    let y_k = [0.7];
    let rho = 33.0;
    let r = vec![-c[0]];
    let w = Iterate { x, r: r.clone(), y: vec![y_k[0] + rho * r[0]], z_l: vec![0.0; 2], z_u: vec![0.0; 2] };
    let res = residual(&mut view, &w, &Subproblem { rho, mu: 0.1, y_k: &y_k });
    assert_eq!(res.penalty, vec![0.0]);
    assert_eq!(res.primal, vec![0.0]);
}

#[test]
fn unconstrained_residual_is_the_gradient() {
    let mut p = NcoProblem::new("free");
    let a = p.add_var("a", -INF, INF, None);
    let b = p.add_var("b", -INF, INF, None);
    p.set_objective(a.clone().powi(4) + a.clone() * b.clone() + b.clone().exp());
    let m = p.compile().unwrap();
    let mut view = m.to_nlp_form();
    let x = vec![1.1, -0.3];
    let w = Iterate { x: x.clone(), r: vec![], y: vec![], z_l: vec![0.0; 2], z_u: vec![0.0; 2] };
    let res = residual(&mut view, &w, &Subproblem { rho: 1.0, mu: 0.5, y_k: &[] });
    let g = [4.0 * 1.1f64.powi(3) - 0.3, 1.1 + (-0.3f64).exp()];
    assert!((res.norm() - g[0].abs().max(g[1].abs())).abs() < 1e-14);
}

#[test]
fn fraction_to_boundary_examples() {
    let step = |dx: f64, dz: f64| NewtonStep { dx: vec![dx], dz_l: vec![dz], dz_u: vec![dz], ..Default::default() };
    let w = Iterate { x: vec![0.5], r: vec![], y: vec![], z_l: vec![1.0], z_u: vec![1.0] };
    let (ap, ad) = fraction_to_boundary(&[0.0], &[1.0], &w, &step(-1.0, 0.0), 0.99);
    assert!((ap - 0.495).abs() < 1e-15);
    assert_eq!(ad, 1.0);
    assert_eq!(fraction_to_boundary(&[0.0], &[1.0], &w, &step(0.0, 0.0), 0.99), (1.0, 1.0));
    let (_, ad) = fraction_to_boundary(&[0.0], &[1.0], &w, &step(0.0, -4.0), 0.99);
    assert!((ad - 0.2475).abs() < 1e-15);
    let free = Iterate { x: vec![0.5], r: vec![], y: vec![], z_l: vec![0.0], z_u: vec![0.0] };
    assert_eq!(fraction_to_boundary(&[-INF], &[INF], &free, &step(-1e9, -1e9), 0.99), (1.0, 1.0));
    assert_eq!(ftb_tau(0.1), 0.99);
    assert_eq!(ftb_tau(1e-4), 1.0 - 1e-4);
}

#[test]
fn convex_qp_subproblem_matches_dense_newton() {
    let m = convex_qp().compile().unwrap();
    let mut view = m.to_nlp_form();
    let (rho, mu) = (100.0, 1e-3);
    let y_k = [0.2, -0.1];
    let sub = Subproblem { rho, mu, y_k: &y_k };
    let oracle = dense_newton_oracle(rho, mu, &y_k);
    for form in [KktFormulation::K2, KktFormulation::K2r, KktFormulation::K1s] {
        let mut w = start(&view, mu);
        let rep = solver(form).solve(&mut view, &mut w, &sub, 1e-8, 200, &mut |_| {}).unwrap();
        assert!(rep.residual <= 1e-8);
        assert!(residual(&mut view, &w, &sub).norm() <= 1e-8);
        for i in 0..4 {
            assert!((w.x[i] - oracle[i]).abs() < 1e-7, "{form}: x[{i}] {} vs {}", w.x[i], oracle[i]);
        }
    }
}

#[test]
fn converged_start_takes_zero_iterations() {
    let m = convex_qp().compile().unwrap();
    let mut view = m.to_nlp_form();
    let y_k = [0.0, 0.0];
    let sub = Subproblem { rho: 100.0, mu: 1e-2, y_k: &y_k };
    let mut w = start(&view, 1e-2);
    let mut s = solver(KktFormulation::K2r);
    s.solve(&mut view, &mut w, &sub, 1e-9, 200, &mut |_| {}).unwrap();
    let before = w.clone();
    let rep = s.solve(&mut view, &mut w, &sub, 1e-9, 200, &mut |_| {}).unwrap();
    assert_eq!(rep.iterations, 0);
    assert_eq!(w, before);
}

#[test]
fn zero_budget_returns_the_start() {
    let m = convex_qp().compile().unwrap();
    let mut view = m.to_nlp_form();
    let y_k = [0.0, 0.0];
    let sub = Subproblem { rho: 100.0, mu: 1e-2, y_k: &y_k };
    let mut w = start(&view, 1e-2);
    let w0 = w.clone();
    let err = solver(KktFormulation::K2r).solve(&mut view, &mut w, &sub, 1e-9, 0, &mut |_| {}).unwrap_err();
    let f0 = residual(&mut view, &w0, &sub).norm();
    assert_eq!(err, InnerError::BudgetExhausted { iterations: 0, residual: f0 });
    assert_eq!(w, w0);
}

#[test]
fn iterates_stay_strictly_interior() {
    for name in ["hs21", "hs35", "hs76", "opf-toy-5", "mpcc-chain-4"] {
        let m = build_named(name, 0).unwrap().compile().unwrap();
        let mut view = m.to_nlp_form();
        let y_k = vec![0.0; view.m()];
        let sub = Subproblem { rho: 100.0, mu: 0.1, y_k: &y_k };
        let mut s = solver(KktFormulation::K1s);
        let mut w = start(&view, 0.1);
        for _ in 0..15 {
            let _ = s.solve(&mut view, &mut w, &sub, 1e-10, 1, &mut |_| {});
            assert!(w.is_interior(view.lower(), view.upper()), "{name}");
        }
    }
}

#[test]
fn fixed_mu_convergence_is_quadratic_on_a_convex_qp() {
    let m = convex_qp().compile().unwrap();
    let mut view = m.to_nlp_form();
    let y_k = [0.0, 0.0];
    let sub = Subproblem { rho: 100.0, mu: 1e-2, y_k: &y_k };
    let mut w = start(&view, 1e-2);
    let mut norms = Vec::new();
    let rep = solver(KktFormulation::K2r)
        .solve(&mut view, &mut w, &sub, 1e-13, 100, &mut |l: &InnerLog| {
            norms.push(l.residual.iter().fold(0.0f64, |a, &b| a.max(b)))
        })
        .unwrap();
    norms.push(rep.residual);
    let k = norms.len();
    assert!(k >= 4, "{norms:?}");
    let ratios: Vec<f64> = (k - 3..k).map(|i| norms[i] / norms[i - 1]).collect();
    assert!(ratios.iter().all(|&q| q < 1.0), "{ratios:?}");
    assert!(ratios[1] < ratios[0] && ratios[2] < ratios[1], "{ratios:?}");
}

#[test]
fn exact_newton_step_on_a_quadratic_is_accepted_first_try() {
    let mut p = NcoProblem::new("quad");
    let a = p.add_var("a", -INF, INF, Some(5.0));
    let b = p.add_var("b", -INF, INF, Some(-3.0));
    p.set_objective(a.clone() * a.clone() + 2.0 * b.clone() * b.clone() + a.clone() * b.clone());
    p.add_equality(a + b - 1.0);
    let m = p.compile().unwrap();
    let mut view = m.to_nlp_form();
    let y_k = [0.0];
    let sub = Subproblem { rho: 1e4, mu: 0.1, y_k: &y_k };
    let mut w = start(&view, 0.1);
    let mut logs = Vec::new();
    let rep = solver(KktFormulation::K2r).solve(&mut view, &mut w, &sub, 1e-9, 10, &mut |l| logs.push(l.clone())).unwrap();
    assert_eq!(rep.iterations, 1);
    assert_eq!(logs[0].backtracks, 0);
    assert_eq!(logs[0].alpha_primal, 1.0);
}

#[test]
fn overshooting_newton_step_backtracks() {
    // Newton on sqrt(1 + x²) from x = 3 jumps to x = -27
    let mut p = NcoProblem::new("hyperbola");
    let a = p.add_var("a", -INF, INF, Some(3.0));
    p.set_objective((1.0 + a.clone() * a).sqrt());
    let m = p.compile().unwrap();
    let mut view = m.to_nlp_form();
    let sub = Subproblem { rho: 1.0, mu: 0.1, y_k: &[] };
    let mut w = start(&view, 0.1);
    let mut logs = Vec::new();
    let rep = solver(KktFormulation::K2r).solve(&mut view, &mut w, &sub, 1e-10, 50, &mut |l| logs.push(l.clone()));
    assert!(logs[0].backtracks >= 1);
    assert!(logs[0].alpha_primal < 1.0);
    assert!(rep.is_ok());
    assert!(w.x[0].abs() < 1e-9);
}

#[test]
fn accepted_steps_approach_unit_length_near_the_minimizer() {
    let m = build_named("convex-qp-10", 0).unwrap().compile().unwrap();
    let mut view = m.to_nlp_form();
    let y_k = vec![0.0; view.m()];
    let sub = Subproblem { rho: 1e3, mu: 1e-4, y_k: &y_k };
    let mut w = start(&view, 1e-4);
    let mut logs: Vec<InnerLog> = Vec::new();
    solver(KktFormulation::K1s).solve(&mut view, &mut w, &sub, 1e-11, 200, &mut |l| logs.push(l.clone())).unwrap();
    let tail = &logs[logs.len().saturating_sub(2)..];
    assert!(tail.iter().all(|l| l.alpha_primal == 1.0 && l.backtracks == 0), "{tail:?}");
}

#[test]
fn k2r_step_at_hs6_start_satisfies_the_full_system() {
    let m = build_named("hs6", 0).unwrap().compile().unwrap();
    let mut view = m.to_nlp_form();
    let y_k = [0.0];
    let sub = Subproblem { rho: 100.0, mu: 0.1, y_k: &y_k };
    let w = start(&view, 0.1);
    let ev = Evaluation::at(&mut view, &w.x);
    let mut s = solver(KktFormulation::K2r);
    let step = s.newton_step(&mut view, &ev, &w, &sub).unwrap();
    let f = residual(&mut view, &w, &sub).norm();
    let mut hess = vec![0.0; view.hess_row().len()];
    view.hessian(&w.x, &w.y, &mut hess);
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
        y_k: &y_k,
        rho: sub.rho,
        mu: sub.mu,
        grad: &ev.grad,
        c: &ev.c,
        jac_row_ptr: view.jac_row_ptr(),
        jac_col: view.jac_col(),
        jac_val: &ev.jac,
        hess_col_ptr: view.hess_col_ptr(),
        hess_row: view.hess_row(),
        hess_val: &hess,
    };
    assert!(k3_residual(&data, &step) <= 1e-9 * f.max(1.0));

    // the symbolic analysis of the K2r pattern is reused across steps
    for _ in 0..3 {
        s.newton_step(&mut view, &ev, &w, &sub).unwrap();
    }
    let stats = s.linear_stats();
    assert_eq!(stats.analyses, 1);
    assert!(stats.factorizations >= 4);
}
