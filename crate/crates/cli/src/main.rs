use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ncl_cli::{cmd_bench, cmd_list, cmd_solve, write_bench_csv, BenchConfig, RunConfig, Source, EXIT_INPUT};
use ncl_core::problems::Family;
use ncl_core::KktFormulation;

#[derive(Parser)]
#[command(name = "ncl", version, about = "Nonlinearly constrained augmented Lagrangian solver")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve a registry instance or an instance file.
    Solve(SolveArgs),
    /// Solve registry instances and print a CSV table.
    Bench(BenchArgs),
    /// List registry instances.
    List,
}

#[derive(Args)]
struct SolveArgs {
    /// Registry name (see `ncl list`) or path to an instance file.
    instance: String,
    #[arg(long, default_value = "k2r")]
    kkt: KktFormulation,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 50)]
    max_outer: usize,
    /// Total inner iteration limit.
    #[arg(long, default_value_t = 1000)]
    max_inner: usize,
    #[arg(long, default_value_t = 1e-10)]
    pivot_eps: f64,
    #[arg(long)]
    no_scaling: bool,
    /// Per-iteration CSV output.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Write every assembled KKT matrix as Matrix Market into this directory.
    #[arg(long)]
    dump_kkt: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct BenchArgs {
    /// Family tag (regular, degenerate-licq, mpcc, infeasible, nonconvex-qp, opf-toy).
    #[arg(long)]
    family: Option<String>,
    /// Keep instances whose name contains this string.
    #[arg(long)]
    filter: Option<String>,
    /// Comma-separated formulations.
    #[arg(long, value_delimiter = ',', default_value = "k2r,k1s")]
    kkt: Vec<KktFormulation>,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Write the table here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.cmd {
        Cmd::Solve(a) => {
            let cfg = RunConfig {
                source: Source::parse(&a.instance),
                formulation: a.kkt,
                tol: a.tol,
                max_outer: a.max_outer,
                max_inner: a.max_inner,
                pivot_eps: a.pivot_eps,
                scaling: !a.no_scaling,
                log: a.log,
                dump_kkt: a.dump_kkt,
                seed: a.seed,
            };
            cmd_solve(&cfg, &mut io::stdout().lock(), &mut io::stderr().lock())
        }
        Cmd::Bench(a) => bench(a),
        Cmd::List => match cmd_list(io::stdout().lock()) {
            Ok(()) => 0,
            Err(_) => ncl_cli::EXIT_INTERNAL,
        },
    };
    ExitCode::from(code as u8)
}

fn bench(a: BenchArgs) -> i32 {
    let family = match a.family.as_deref().map(|t| Family::from_tag(t).ok_or(t)) {
        None => None,
        Some(Ok(f)) => Some(f),
        Some(Err(t)) => {
            let tags: Vec<&str> = Family::ALL.iter().map(|f| f.tag()).collect();
            eprintln!("error: unknown family '{t}' (expected one of {})", tags.join(", "));
            return EXIT_INPUT;
        }
    };
    let cfg = BenchConfig { family, filter: a.filter, formulations: a.kkt, tol: a.tol, jobs: a.jobs };
    let rows = cmd_bench(&cfg);
    let res = match &a.out {
        Some(p) => std::fs::File::create(p).and_then(|f| write_bench_csv(&rows, f)),
        None => write_bench_csv(&rows, io::stdout().lock()),
    };
    match res {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            ncl_cli::EXIT_INTERNAL
        }
    }
}
