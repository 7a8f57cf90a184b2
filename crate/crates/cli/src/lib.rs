//! Command implementations behind the `ncl` binary.

use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use ncl_core::ncl::{solve_with_events, Event};
use ncl_core::problems::{self, Family};
use ncl_core::{KktFormulation, NcoProblem, SolveOptions, SolveReport, SolveStatus};

pub const EXIT_INPUT: i32 = 4;
pub const EXIT_INTERNAL: i32 = 5;

pub fn exit_code(status: SolveStatus) -> i32 {
    match status {
        SolveStatus::Optimal => 0,
        SolveStatus::Acceptable => 1,
        SolveStatus::LocallyInfeasible => 2,
        SolveStatus::IterationLimit => 3,
        SolveStatus::StepFailure => EXIT_INTERNAL,
    }
}

/// Benchmark flag: 1 solved, 2 acceptable, 0 otherwise.
pub fn flag(status: SolveStatus) -> u8 {
    match status {
        SolveStatus::Optimal => 1,
        SolveStatus::Acceptable => 2,
        _ => 0,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Source {
    Registry(String),
    File(PathBuf),
}

impl Source {
    /// Anything that exists on disk, contains a path separator, or has an
    /// extension is a file; everything else is a registry name.
    pub fn parse(arg: &str) -> Source {
        let p = Path::new(arg);
        if p.exists() || arg.contains('/') || arg.contains('\\') || p.extension().is_some() {
            Source::File(p.to_path_buf())
        } else {
            Source::Registry(arg.to_string())
        }
    }

    pub fn load(&self, seed: u64) -> Result<NcoProblem, String> {
        match self {
            Source::Registry(name) => problems::build_named(name, seed).map_err(|e| e.to_string()),
            Source::File(path) => problems::load_instance(path).map_err(|e| e.to_string()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub source: Source,
    pub formulation: KktFormulation,
    pub tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub pivot_eps: f64,
    pub scaling: bool,
    pub log: Option<PathBuf>,
    pub dump_kkt: Option<PathBuf>,
    pub seed: u64,
}

impl RunConfig {
    pub fn new(source: Source) -> Self {
        let d = SolveOptions::default();
        Self {
            source,
            formulation: d.formulation,
            tol: d.eta_tol,
            max_outer: d.max_outer,
            max_inner: d.max_inner_total,
            pivot_eps: d.pivot_eps,
            scaling: true,
            log: None,
            dump_kkt: None,
            seed: 0,
        }
    }

    pub fn options(&self) -> SolveOptions {
        SolveOptions {
            formulation: self.formulation,
            eta_tol: self.tol,
            omega_tol: self.tol,
            max_outer: self.max_outer,
            max_inner_total: self.max_inner,
            pivot_eps: self.pivot_eps,
            scaling: self.scaling,
            dump_kkt: self.dump_kkt.clone(),
            ..Default::default()
        }
    }
}

pub const ITERATION_HEADER: [&str; 13] = [
    "k_outer",
    "k_inner",
    "f_stationarity",
    "f_penalty",
    "f_primal",
    "f_compl_lower",
    "f_compl_upper",
    "mu",
    "rho",
    "delta",
    "alpha",
    "refinement_steps",
    "perturbed_pivots",
];

/// One row per Newton step; `k_inner = 0` marks the extrapolation step of an
/// outer iteration. Residual norms are taken before the step.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRow {
    pub k_outer: usize,
    pub k_inner: usize,
    pub residual: [f64; 5],
    pub mu: f64,
    pub rho: f64,
    pub delta: f64,
    pub alpha: f64,
    pub refinement_steps: usize,
    pub perturbed_pivots: usize,
}

impl IterationRow {
    fn record(&self) -> Vec<String> {
        let mut v = vec![self.k_outer.to_string(), self.k_inner.to_string()];
        v.extend(self.residual.iter().map(|x| format!("{x:e}")));
        v.extend([self.mu, self.rho, self.delta, self.alpha].iter().map(|x| format!("{x:e}")));
        v.push(self.refinement_steps.to_string());
        v.push(self.perturbed_pivots.to_string());
        v
    }
}

pub fn write_iteration_csv<W: Write>(rows: &[IterationRow], w: W) -> io::Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(ITERATION_HEADER)?;
    for r in rows {
        wr.write_record(r.record())?;
    }
    wr.flush()
}

/// Solves `problem`, collecting per-step rows.
pub fn run(problem: &NcoProblem, opts: &SolveOptions) -> Result<(SolveReport, Vec<IterationRow>), String> {
    let model = problem.compile().map_err(|e| e.to_string())?;
    let mut rows = Vec::new();
    let report = solve_with_events(&model, opts, &mut |ev| {
        if let Event::Inner { outer, rho, mu, log } = ev {
            rows.push(IterationRow {
                k_outer: outer,
                k_inner: log.iteration,
                residual: log.residual,
                mu,
                rho,
                delta: log.delta,
                alpha: log.alpha_primal,
                refinement_steps: log.refinement_steps,
                perturbed_pivots: log.perturbed_pivots,
            });
        }
    });
    Ok((report, rows))
}

pub fn write_summary<W: Write>(name: &str, rep: &SolveReport, mut w: W) -> io::Result<()> {
    writeln!(w, "instance            {name}")?;
    writeln!(w, "formulation         {}", rep.formulation)?;
    writeln!(w, "status              {}", rep.status)?;
    writeln!(w, "objective           {:.12e}", rep.objective)?;
    writeln!(w, "primal residual     {:.3e}", rep.primal_residual)?;
    writeln!(w, "dual residual       {:.3e}", rep.dual_residual)?;
    writeln!(w, "constraint viol.    {:.3e}", rep.constraint_violation)?;
    writeln!(w, "final mu, rho       {:.3e}, {:.3e}", rep.mu, rep.rho)?;
    writeln!(w, "outer iterations    {}", rep.outer_iterations)?;
    writeln!(w, "inner iterations    {} ({} extrapolations)", rep.inner_iterations, rep.extrapolations)?;
    writeln!(w, "factorizations      {}", rep.linear.factorizations)?;
    writeln!(w, "linear solver time  {:.4} s", rep.linear.seconds)?;
    writeln!(w, "total time          {:.4} s", rep.seconds)?;
    Ok(())
}

/// `ncl solve`: prints a summary to `out`, diagnostics to `err`, and returns the exit code.
pub fn cmd_solve(cfg: &RunConfig, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    if !(cfg.tol > 0.0) {
        let _ = writeln!(err, "error: tolerance must be positive");
        return EXIT_INPUT;
    }
    let problem = match cfg.source.load(cfg.seed) {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_INPUT;
        }
    };
    if let Some(dir) = &cfg.dump_kkt {
        if let Err(e) = std::fs::create_dir_all(dir) {
            let _ = writeln!(err, "error: cannot create {}: {e}", dir.display());
            return EXIT_INPUT;
        }
    }
    let (report, rows) = match run(&problem, &cfg.options()) {
        Ok(r) => r,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_INPUT;
        }
    };
    if let Some(path) = &cfg.log {
        let res = std::fs::File::create(path).and_then(|f| write_iteration_csv(&rows, io::BufWriter::new(f)));
        if let Err(e) = res {
            let _ = writeln!(err, "error: cannot write {}: {e}", path.display());
            return EXIT_INTERNAL;
        }
    }
    let _ = write_summary(problem.name(), &report, out);
    exit_code(report.status)
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub family: Option<Family>,
    /// Substring filter on instance names.
    pub filter: Option<String>,
    pub formulations: Vec<KktFormulation>,
    pub tol: f64,
    pub jobs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub instance: String,
    pub family: Family,
    pub formulation: KktFormulation,
    pub flag: u8,
    pub status: String,
    pub objective: f64,
    pub outer: usize,
    pub inner: usize,
    pub linear_seconds: f64,
    pub total_seconds: f64,
}

pub const BENCH_HEADER: [&str; 10] =
    ["instance", "family", "kkt", "flag", "status", "objective", "outer", "it", "lin", "total"];

/// `ncl bench`: one row per (instance, formulation), sorted by instance name
/// and then by the order of `formulations`.
pub fn cmd_bench(cfg: &BenchConfig) -> Vec<BenchRow> {
    let mut specs: Vec<_> = problems::registry()
        .into_iter()
        .filter(|s| cfg.family.map_or(true, |f| s.family == f))
        .filter(|s| cfg.filter.as_deref().map_or(true, |f| s.name.contains(f)))
        .collect();
    specs.sort_by(|a, b| a.name.cmp(&b.name));
    let jobs: Vec<(usize, usize)> =
        (0..specs.len()).flat_map(|i| (0..cfg.formulations.len()).map(move |j| (i, j))).collect();
    let results: Mutex<Vec<Option<BenchRow>>> = Mutex::new(vec![None; jobs.len()]);
    let next = AtomicUsize::new(0);
    let workers = cfg.jobs.max(1).min(jobs.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(i, j)) = jobs.get(idx) else { break };
                let spec = &specs[i];
                let form = cfg.formulations[j];
                let opts = SolveOptions::default().with_tol(cfg.tol).with_formulation(form);
                let t0 = Instant::now();
                let row = match spec.build().compile() {
                    Ok(model) => {
                        let rep = ncl_core::solve(&model, &opts);
                        BenchRow {
                            instance: spec.name.clone(),
                            family: spec.family,
                            formulation: form,
                            flag: flag(rep.status),
                            status: rep.status.to_string(),
                            objective: rep.objective,
                            outer: rep.outer_iterations,
                            inner: rep.inner_iterations,
                            linear_seconds: rep.linear.seconds,
                            total_seconds: t0.elapsed().as_secs_f64(),
                        }
                    }
                    Err(e) => BenchRow {
                        instance: spec.name.clone(),
                        family: spec.family,
                        formulation: form,
                        flag: 0,
                        status: format!("model-error: {e}"),
                        objective: f64::NAN,
                        outer: 0,
                        inner: 0,
                        linear_seconds: 0.0,
                        total_seconds: t0.elapsed().as_secs_f64(),
                    },
                };
                results.lock().unwrap()[idx] = Some(row);
            });
        }
    });
    results.into_inner().unwrap().into_iter().map(|r| r.expect("every job ran")).collect()
}

pub fn write_bench_csv<W: Write>(rows: &[BenchRow], w: W) -> io::Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(BENCH_HEADER)?;
    for r in rows {
        wr.write_record([
            r.instance.clone(),
            r.family.tag().to_string(),
            r.formulation.to_string(),
            r.flag.to_string(),
            r.status.clone(),
            format!("{:.10e}", r.objective),
            r.outer.to_string(),
            r.inner.to_string(),
            format!("{:.6}", r.linear_seconds),
            format!("{:.6}", r.total_seconds),
        ])?;
    }
    wr.flush()
}

/// `ncl list`: name, family, size as `n_t/m_eq/m_ineq`, and known optimum.
pub fn cmd_list<W: Write>(mut w: W) -> io::Result<()> {
    writeln!(w, "{:<16} {:<16} {:>16} {:>18}", "name", "family", "n/m_eq/m_ineq", "optimum")?;
    for spec in problems::registry() {
        let p = spec.build();
        let size = format!("{}/{}/{}", p.n_vars(), p.equalities().len(), p.inequalities().len());
        let opt = match &spec.optimum {
            Some(o) => format!("{:.9e}", o.value),
            None => "infeasible".to_string(),
        };
        writeln!(w, "{:<16} {:<16} {:>16} {:>18}", spec.name, spec.family.tag(), size, opt)?;
    }
    Ok(())
}
