//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.

mod common;

use std::time::{Duration, Instant};

use common::fd::check_derivatives;
use common::kkt::{block_ldl_errors, dense_k3, flatten, inertia_statements, max_diff, point_from_view, random_point};
use common::sparse::{dense, eigen_inertia, random_sparse, reconstruction_error};
use ncl_core::kkt::{k3_residual, KktOptions, KktSolver};
use ncl_core::ncl::{outer_update, OuterState, Schedule};
use ncl_core::problems::{build_named, registry, Family};
use ncl_core::sparse::{analyze, factorize};
use ncl_core::{solve, KktFormulation, SolveOptions, SolveReport, SolveStatus};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("derivatives match finite differences", derivatives),
        ("factorization inertia and reconstruction", factorization),
        ("inertia statements are equivalent", inertia_equivalence),
        ("formulations recover the same step", formulation_equivalence),
        ("block factorization identities", block_identities),
        ("regular instances reach known optima", regular_convergence),
        ("degenerate instances solve under K2r", degenerate_robustness),
        ("infeasibility is detected", infeasibility),
        ("outer schedule arithmetic", schedule_arithmetic),
        ("extrapolation closes the outer loop", extrapolation_tail),
        ("objective scaling invariance", scaling_invariance),
    ];
    let mut failed = 0;
    for (i, (label, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2}: PASS  {label} ({detail}; {secs:.2}s)", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2}: FAIL  {label} ({detail}; {secs:.2}s)", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

fn within(start: Instant, limit: Duration, what: &str) -> Result<(), String> {
    let t = start.elapsed();
    if t <= limit {
        Ok(())
    } else {
        Err(format!("{what} took {:.1}s, limit {}s", t.as_secs_f64(), limit.as_secs()))
    }
}

fn derivatives() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let specs = registry();
    for spec in &specs {
        let m = spec.build().compile().map_err(|e| format!("{}: {e}", spec.name))?;
        check_derivatives(&spec.name, &m, &mut rng, 20)?;
    }
    within(start, Duration::from_secs(30), "derivative checks")?;
    Ok(format!("{} instances, 20 points each", specs.len()))
}

fn factorization() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut reconstructed, mut worst) = (0, 0.0f64);
    for trial in 0..200 {
        let n = rng.gen_range(1..=60);
        let density = rng.gen_range(0.05..0.4);
        let shift = if trial % 2 == 0 { 0.0 } else { rng.gen_range(-3.0..3.0) };
        let a = random_sparse(&mut rng, n, density, shift);
        let f = factorize(&analyze(&a), &a, 1e-10).map_err(|e| format!("trial {trial}: {e}"))?;
        if f.perturbed_pivots() > 0 {
            continue;
        }
        let exact = eigen_inertia(&dense(&a));
        if f.inertia() != exact {
            return Err(format!("trial {trial}: inertia {:?} vs eigenvalues {exact:?}", f.inertia()));
        }
        let err = reconstruction_error(&a, &f) / a.max_abs().max(1.0);
        if err > 1e-11 {
            return Err(format!("trial {trial}: reconstruction {err:e}"));
        }
        reconstructed += 1;
        worst = worst.max(err);
    }
    within(start, Duration::from_secs(60), "factorizations")?;
    Ok(format!("{reconstructed} of 200 unperturbed, worst relative reconstruction {worst:.1e}"))
}

fn inertia_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut holds = 0;
    for trial in 0..100 {
        let m_eq = rng.gen_range(0..=5);
        let m_in = rng.gen_range(0..=10 - m_eq);
        let n_t = rng.gen_range(1..=20 - m_in);
        let p = random_point(rng.gen(), n_t, m_eq, m_in, rng.gen_range(-3.0..2.0));
        let delta = if rng.gen_bool(0.2) { 0.0 } else { 10f64.powf(rng.gen_range(-6.0..1.0)) };
        let s = inertia_statements(&p, delta);
        if !(s[0] == s[1] && s[1] == s[2]) {
            return Err(format!("trial {trial} (n={}, m={}): {s:?}", p.n(), p.m()));
        }
        holds += s[0] as usize;
    }
    Ok(format!("0 counterexamples, statements hold in {holds} of 100"))
}

fn formulation_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let models: Vec<_> = registry()
        .into_iter()
        .map(|s| (s.name.clone(), s.build().compile().unwrap()))
        .filter(|(_, m)| m.n_t() <= 30)
        .collect();
    let (mut worst_step, mut worst_res) = (0.0f64, 0.0f64);
    for trial in 0..50 {
        let (name, m) = &models[trial % models.len()];
        let mut view = m.to_nlp_form();
        let p = point_from_view(&mut view, &mut rng);
        let mut steps = Vec::new();
        for form in KktFormulation::ALL {
            let mut solver = KktSolver::new(form, KktOptions::default());
            let step = solver.solve(&p.data()).map_err(|e| format!("{name} {form}: {e}"))?;
            let rhs = dense_k3(&p, step.delta).1.amax();
            let res = k3_residual(&p.data(), &step) / rhs.max(1.0);
            if res > 1e-8 {
                return Err(format!("trial {trial} {name} {form}: K3 residual {res:e}"));
            }
            worst_res = worst_res.max(res);
            steps.push((form, step.delta, flatten(&step)));
        }
        for (form, delta, s) in &steps[1..] {
            let d = max_diff(s, &steps[0].2);
            if d > 1e-7 {
                return Err(format!(
                    "trial {trial} {name}: {form} (δ={delta:e}) differs from K2 (δ={:e}) by {d:e}",
                    steps[0].1
                ));
            }
            worst_step = worst_step.max(d);
        }
    }
    Ok(format!("50 systems, max step difference {worst_step:.1e}, max relative K3 residual {worst_res:.1e}"))
}

fn block_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for trial in 0..50 {
        let p = random_point(
            rng.gen(),
            rng.gen_range(1..12),
            rng.gen_range(0..5),
            rng.gen_range(0..5),
            rng.gen_range(-2.0..3.0),
        );
        let delta = if trial % 5 == 0 { 0.0 } else { rng.gen_range(0.0..1.0) };
        let (k2, k2r) = block_ldl_errors(&p, delta);
        if k2 > 1e-10 || k2r > 1e-10 {
            return Err(format!("trial {trial}: K2 {k2:e}, K2r {k2r:e}"));
        }
        worst = worst.max(k2).max(k2r);
    }
    Ok(format!("50 systems, worst relative error {worst:.1e}"))
}

fn timed_solve(name: &str, opts: &SolveOptions) -> (SolveReport, f64) {
    let m = build_named(name, 0).unwrap().compile().unwrap();
    let start = Instant::now();
    let r = solve(&m, opts);
    (r, start.elapsed().as_secs_f64())
}

fn regular_convergence() -> Outcome {
    let specs: Vec<_> = registry()
        .into_iter()
        .filter(|s| matches!(s.family, Family::Regular | Family::NonconvexQp | Family::OpfToy))
        .filter(|s| s.optimum.is_some() && s.build().n_vars() <= 2000)
        .collect();
    if specs.len() < 8 {
        return Err(format!("only {} instances in the suite", specs.len()));
    }
    let mut failures = Vec::new();
    let mut worst = 0.0f64;
    for spec in &specs {
        let opt = spec.optimum.as_ref().unwrap().value;
        for form in [KktFormulation::K2r, KktFormulation::K1s] {
            let (r, secs) = timed_solve(&spec.name, &SolveOptions::default().with_tol(1e-8).with_formulation(form));
            let gap = (r.objective - opt).abs();
            worst = worst.max(gap);
            if r.status != SolveStatus::Optimal || gap > 1e-6 || secs >= 10.0 {
                failures.push(format!("{} {form}: {} gap {gap:.1e} in {secs:.1}s", spec.name, r.status.name()));
            }
        }
    }
    if failures.is_empty() {
        Ok(format!("{} instances x 2 formulations, worst gap {worst:.1e}", specs.len()))
    } else {
        Err(failures.join("; "))
    }
}

fn degenerate_robustness() -> Outcome {
    let specs: Vec<_> = registry()
        .into_iter()
        .filter(|s| s.family == Family::Mpcc || s.name == "dup-rows")
        .collect();
    let mpccs = specs.iter().filter(|s| s.family == Family::Mpcc).count();
    if mpccs < 3 {
        return Err(format!("only {mpccs} MPCC instances"));
    }
    let opts = SolveOptions::default().with_tol(1e-5).with_formulation(KktFormulation::K2r);
    let mut failures = Vec::new();
    for spec in &specs {
        let (r, _) = timed_solve(&spec.name, &opts);
        if r.status != SolveStatus::Optimal {
            failures.push(format!("{}: {}", spec.name, r.status.name()));
        }
    }
    if failures.is_empty() {
        Ok(format!("dup-rows and {mpccs} MPCC instances optimal"))
    } else {
        Err(failures.join("; "))
    }
}

fn infeasibility() -> Outcome {
    for name in ["infeas-circle", "infeas-qp"] {
        let (r, _) = timed_solve(name, &SolveOptions::default());
        if r.status != SolveStatus::LocallyInfeasible || r.rho != 1e14 {
            return Err(format!("{name}: {} with rho {:e}", r.status.name(), r.rho));
        }
    }
    Ok("infeas-circle and infeas-qp stop at rho 1e14".into())
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn schedule_arithmetic() -> Outcome {
    let mut st = OuterState::new(vec![0.0], 100.0, 0.1, Schedule::default());
    st.eta = 1.0;
    if !outer_update(&mut st, &[1e-3]) {
        return Err("small residual took the failure branch".into());
    }
    let mu = 0.1f64.powf(1.99);
    let omega = 100.0 * mu.powf(1.05);
    let (e_mu, e_omega) = (rel_err(st.mu, mu), rel_err(st.omega, omega));
    if e_mu > 1e-15 || e_omega > 1e-15 || st.rho != 100.0 || rel_err(st.y_k[0], 0.1) > 1e-15 {
        return Err(format!("success branch: mu err {e_mu:e}, omega err {e_omega:e}, rho {}, y {:?}", st.rho, st.y_k));
    }

    let mut rho = 1.0;
    let mut st = OuterState::new(vec![0.0], rho, 0.1, Schedule::default());
    while rho < 1e14 {
        st.eta = 0.0;
        outer_update(&mut st, &[1.0]);
        let expected = (rho * 10.0f64).min(1e14);
        if st.rho != expected {
            return Err(format!("failure branch: rho {rho:e} became {:e}", st.rho));
        }
        rho = st.rho;
    }
    outer_update(&mut st, &[1.0]);
    if st.rho != 1e14 {
        return Err(format!("rho exceeded the cap: {:e}", st.rho));
    }
    Ok(format!("mu error {e_mu:.1e}, omega error {e_omega:.1e}, rho x10 to 1e14"))
}

fn extrapolation_tail() -> Outcome {
    let mut notes = Vec::new();
    let mut failures = Vec::new();
    for name in ["hs21", "hs28", "hs35", "hs76", "convex-qp-10", "convex-qp-200"] {
        let (r, _) = timed_solve(name, &SolveOptions::default());
        let log = &r.log;
        if r.status != SolveStatus::Optimal || log.len() < 2 {
            failures.push(format!("{name}: {} after {} outer iterations", r.status.name(), log.len()));
            continue;
        }
        let tail = &log[log.len() - 2..];
        let mut worst = 0.0f64;
        for row in tail {
            let ratio = row.f_after / row.f_before;
            worst = worst.max(ratio);
            if !row.extrapolated || row.alpha != 1.0 || !(ratio < 0.5) {
                failures.push(format!(
                    "{name} k={}: extrapolated {} alpha {} ratio {ratio:.2e}",
                    row.k, row.extrapolated, row.alpha
                ));
            }
        }
        notes.push(format!("{name} {worst:.1e}"));
    }
    let ratios = format!("tail contraction ratios: {}", notes.join(", "));
    if failures.is_empty() {
        Ok(ratios)
    } else {
        Err(format!("{}; {ratios}", failures.join("; ")))
    }
}

fn scaling_invariance() -> Outcome {
    let opts = SolveOptions::default();
    let mut worst = 0.0f64;
    for name in ["hs21", "hs35", "hs76", "convex-qp-10", "opf-toy-5"] {
        let p = build_named(name, 0).unwrap();
        let mut scaled = p.clone();
        scaled.set_objective(1e3 * p.objective().clone());
        let (a, b) = (solve(&p.compile().unwrap(), &opts), solve(&scaled.compile().unwrap(), &opts));
        for r in [&a, &b] {
            if r.status != SolveStatus::Optimal {
                return Err(format!("{name}: {}", r.status.name()));
            }
            let sigmas = std::iter::once(r.scale.objective).chain(r.scale.constraints.iter().copied());
            if let Some(s) = sigmas.into_iter().find(|s| !(1e-8..=1.0).contains(s)) {
                return Err(format!("{name}: scale factor {s:e} out of range"));
            }
        }
        let d = max_diff(&a.x, &b.x);
        if d > 1e-6 {
            return Err(format!("{name}: argmin moved by {d:e}"));
        }
        worst = worst.max(d);
    }
    Ok(format!("5 instances, max argmin change {worst:.1e}"))
}
