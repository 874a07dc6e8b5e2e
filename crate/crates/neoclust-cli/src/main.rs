//! Command-line front end: ingestion, solver selection, multi-trial
//! experiments, and trace/metrics emission.
//!
//! All numeric output uses Rust's default float formatting, so CSV files
//! are locale-independent ('.' decimal) and round-trip exactly. For a
//! fixed seed and flag set the assignment output is bit-identical across
//! runs; wall-clock columns are the only nondeterministic fields.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use neoclust::kernels::{
    kernel_from_data, kernel_from_graph, load_clusters, load_features, load_graph, write_clusters,
    KernelKind,
};
use neoclust::metrics::MetricsReport;
use neoclust::pipeline::{run, Engine, PipelineConfig, PipelineResult};
use neoclust::solvers::{SolveResult, SolverConfig};
use neoclust::KernelProblem;

#[derive(Parser)]
#[command(name = "neoclust", version, about = "Non-exhaustive overlapping clustering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cluster vector data given as a CSV/TSV feature matrix.
    Cluster(ClusterArgs),
    /// Find overlapping communities in an edge-list graph.
    Community(CommunityArgs),
    /// Run several methods on the same instance, one trace per method.
    Race(RaceArgs),
}

#[derive(Args)]
struct ClusterArgs {
    /// Feature matrix, one row per point (comma- or whitespace-separated).
    #[arg(long)]
    data: PathBuf,
    /// Kernel: `linear` or `gaussian:BANDWIDTH`.
    #[arg(long, default_value = "linear", value_parser = parse_kernel)]
    kernel: KernelKind,
    /// Skip one header line in --data.
    #[arg(long)]
    header: bool,
    /// Method: iterative, alm, palm, admm, or sadmm.
    #[arg(long, default_value = "alm", value_parser = parse_engine)]
    method: Engine,
    #[command(flatten)]
    problem: ProblemArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct CommunityArgs {
    /// Edge list `u v [weight]`, 1-based node ids, one undirected edge per
    /// line.
    #[arg(long)]
    graph: PathBuf,
    /// Diagonal shift added to the graph kernel.
    #[arg(long, default_value_t = 0.0)]
    delta: f64,
    /// Method: iterative, alm, palm, admm, or sadmm.
    #[arg(long, default_value = "alm", value_parser = parse_engine)]
    method: Engine,
    #[command(flatten)]
    problem: ProblemArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct RaceArgs {
    /// Feature matrix (alternative to --graph).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Edge-list graph (alternative to --data).
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Kernel for --data: `linear` or `gaussian:BANDWIDTH`.
    #[arg(long, default_value = "linear", value_parser = parse_kernel)]
    kernel: KernelKind,
    /// Skip one header line in --data.
    #[arg(long)]
    header: bool,
    /// Diagonal shift for the --graph kernel.
    #[arg(long, default_value_t = 0.0)]
    delta: f64,
    /// Comma-separated methods to race.
    #[arg(long, default_value = "alm,palm,admm,sadmm")]
    methods: String,
    /// Directory for per-method trace CSVs (`trace-METHOD.csv`).
    #[arg(long)]
    trace_dir: Option<PathBuf>,
    /// Combined per-method metrics CSV.
    #[arg(long)]
    metrics: Option<PathBuf>,
    #[command(flatten)]
    problem: ProblemArgs,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args)]
struct ProblemArgs {
    /// Number of clusters.
    #[arg(long)]
    k: usize,
    /// Overlap budget: `round((1+alpha) n)` assignments are made in total.
    #[arg(long)]
    alpha: f64,
    /// Outlier budget: up to `floor(beta n)` points may stay unassigned.
    #[arg(long)]
    beta: f64,
    /// Ground-truth clusters (one per line, 1-based ids) for F1 scoring.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Args)]
struct SolverArgs {
    /// Infeasibility tolerance (constraint residual infinity norm).
    #[arg(long, default_value_t = 1e-3)]
    tol: f64,
    /// Outer-iteration cap.
    #[arg(long, default_value_t = 300)]
    max_outer: usize,
    /// Initial penalty parameter; scale with the kernel magnitude.
    #[arg(long)]
    sigma0: Option<f64>,
    /// Base RNG seed; trial t uses seed + t.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Independently seeded runs; medians and quartiles are reported.
    #[arg(long, default_value_t = 1)]
    trials: usize,
    /// Warm-start restarts per run; the best objective seeds the solver.
    #[arg(long, default_value_t = 1)]
    warm_restarts: usize,
    /// Sweep cap per warm-start run.
    #[arg(long, default_value_t = 100)]
    warm_iters: usize,
}

#[derive(Args)]
struct OutputArgs {
    /// Assignment output: one cluster per line, space-separated 1-based
    /// ids. With --trials > 1 the first trial's clustering is written.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-outer-iteration trace CSV (first trial's).
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Metrics CSV, one row per trial.
    #[arg(long)]
    metrics: Option<PathBuf>,
}

fn parse_engine(s: &str) -> Result<Engine, String> {
    s.parse().map_err(|e| format!("{e}"))
}

fn parse_kernel(s: &str) -> Result<KernelKind, String> {
    if s == "linear" {
        return Ok(KernelKind::Linear);
    }
    if let Some(h) = s.strip_prefix("gaussian:") {
        let bandwidth: f64 = h
            .parse()
            .map_err(|_| format!("bad gaussian bandwidth {h:?}"))?;
        return Ok(KernelKind::Gaussian { bandwidth });
    }
    Err(format!(
        "unknown kernel {s:?} (expected `linear` or `gaussian:BANDWIDTH`)"
    ))
}

/// A loaded problem plus the bookkeeping to translate results back to
/// input ids.
struct Instance {
    problem: KernelProblem,
    truth: Option<Vec<Vec<usize>>>,
    /// Problem index -> original 0-based input id (graphs may drop
    /// isolated nodes).
    original: Vec<usize>,
}

impl Instance {
    fn from_features(
        path: &Path,
        header: bool,
        kernel: KernelKind,
        args: &ProblemArgs,
    ) -> Result<Self> {
        let data = load_features(path, header)?;
        let truth = args
            .truth
            .as_ref()
            .map(|p| load_clusters(p, data.n()))
            .transpose()?;
        let problem = kernel_from_data(&data, kernel, args.k, args.alpha, args.beta)?;
        let original = (0..problem.n()).collect();
        Ok(Instance {
            problem,
            truth,
            original,
        })
    }

    fn from_graph(path: &Path, delta: f64, args: &ProblemArgs) -> Result<Self> {
        let graph = load_graph(path)?;
        let (problem, original) = kernel_from_graph(&graph, delta, args.k, args.alpha, args.beta)?;
        let truth = match &args.truth {
            None => None,
            Some(p) => {
                let raw = load_clusters(p, graph.n())?;
                let mut position = vec![None; graph.n()];
                for (pos, &node) in original.iter().enumerate() {
                    position[node] = Some(pos);
                }
                let remapped: Vec<Vec<usize>> = raw
                    .iter()
                    .map(|members| members.iter().filter_map(|&i| position[i]).collect())
                    .collect();
                let dropped: usize = raw.iter().map(Vec::len).sum::<usize>()
                    - remapped.iter().map(Vec::len).sum::<usize>();
                if dropped > 0 {
                    log::warn!("{dropped} ground-truth id(s) refer to dropped isolated nodes");
                }
                Some(remapped)
            }
        };
        Ok(Instance {
            problem,
            truth,
            original,
        })
    }

    /// Cluster lists in original 0-based input ids.
    fn original_clusters(&self, result: &PipelineResult) -> Vec<Vec<usize>> {
        result
            .clustering
            .clusters()
            .into_iter()
            .map(|members| members.into_iter().map(|i| self.original[i]).collect())
            .collect()
    }
}

fn pipeline_config(engine: Engine, solver: &SolverArgs) -> PipelineConfig {
    let mut sc = SolverConfig {
        tol_infeas: solver.tol,
        max_outer: solver.max_outer,
        ..SolverConfig::default()
    };
    if let Some(s) = solver.sigma0 {
        sc.sigma0 = s;
    }
    PipelineConfig {
        engine,
        solver: sc,
        warm_iters: solver.warm_iters,
        warm_restarts: solver.warm_restarts,
        seed: solver.seed,
    }
}

fn write_trace(path: &Path, result: &SolveResult) -> Result<()> {
    let mut text = String::from("iter,wall_seconds,sdp_objective,infeasibility,sigma,inner_evals\n");
    for r in &result.trace.records {
        writeln!(
            text,
            "{},{},{},{},{},{}",
            r.iter, r.wall_seconds, r.sdp_objective, r.infeasibility, r.sigma, r.inner_evals
        )
        .expect("string write");
    }
    fs::write(path, text).with_context(|| format!("writing trace {}", path.display()))
}

fn write_metrics(path: &Path, reports: &[(String, &MetricsReport)]) -> Result<()> {
    let mut text = format!("trial,{}\n", MetricsReport::csv_header());
    for (label, report) in reports {
        writeln!(text, "{label},{}", report.csv_row()).expect("string write");
    }
    fs::write(path, text).with_context(|| format!("writing metrics {}", path.display()))
}

/// Linear-interpolation quartiles of an unsorted sample.
fn quartiles(values: &[f64]) -> (f64, f64, f64) {
    let mut xs = values.to_vec();
    xs.sort_by(f64::total_cmp);
    let at = |p: f64| {
        let pos = p * (xs.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        xs[lo] + (pos - lo as f64) * (xs[hi] - xs[lo])
    };
    (at(0.25), at(0.5), at(0.75))
}

fn run_command(instance: &Instance, engine: Engine, solver: &SolverArgs, output: &OutputArgs) -> Result<()> {
    if solver.trials == 0 {
        bail!("--trials must be at least 1");
    }
    let base = pipeline_config(engine, solver);
    let results: Vec<PipelineResult> = (0..solver.trials)
        .into_par_iter()
        .map(|t| {
            let cfg = PipelineConfig {
                seed: base.seed + t as u64,
                ..base.clone()
            };
            run(&instance.problem, instance.truth.as_deref(), &cfg)
        })
        .collect::<neoclust::Result<_>>()?;

    if let Some(path) = &output.out {
        write_clusters(path, &instance.original_clusters(&results[0]))?;
    }
    if let Some(path) = &output.trace {
        match &results[0].solve {
            Some(res) => write_trace(path, res)?,
            None => log::warn!("--trace given but the iterative method has no solver trace"),
        }
    }
    if let Some(path) = &output.metrics {
        let rows: Vec<(String, &MetricsReport)> = results
            .iter()
            .enumerate()
            .map(|(t, r)| (t.to_string(), &r.report))
            .collect();
        write_metrics(path, &rows)?;
    }

    if solver.trials == 1 {
        print!("{}", results[0].report);
    } else {
        let objectives: Vec<f64> = results.iter().map(|r| r.report.neo_objective).collect();
        let walls: Vec<f64> = results.iter().map(|r| r.report.wall_seconds).collect();
        let (oq1, omed, oq3) = quartiles(&objectives);
        let (wq1, wmed, wq3) = quartiles(&walls);
        println!("method: {}", engine.name());
        println!("trials: {}", solver.trials);
        println!("neo_objective_median: {omed:.6}");
        println!("neo_objective_q1: {oq1:.6}");
        println!("neo_objective_q3: {oq3:.6}");
        println!("wall_seconds_median: {wmed:.3}");
        println!("wall_seconds_q1: {wq1:.3}");
        println!("wall_seconds_q3: {wq3:.3}");
    }
    Ok(())
}

fn run_race(args: &RaceArgs) -> Result<()> {
    let instance = match (&args.data, &args.graph) {
        (Some(_), Some(_)) => bail!("--data and --graph are mutually exclusive"),
        (None, None) => bail!("race needs --data or --graph"),
        (Some(path), None) => {
            Instance::from_features(path, args.header, args.kernel, &args.problem)?
        }
        (None, Some(path)) => Instance::from_graph(path, args.delta, &args.problem)?,
    };
    let engines: Vec<Engine> = args
        .methods
        .split(',')
        .map(|name| parse_engine(name.trim()).map_err(anyhow::Error::msg))
        .collect::<Result<_>>()?;
    if let Some(dir) = &args.trace_dir {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }

    let mut reports = Vec::new();
    for engine in engines {
        let cfg = pipeline_config(engine, &args.solver);
        let result = run(&instance.problem, instance.truth.as_deref(), &cfg)?;
        if let Some(dir) = &args.trace_dir {
            match &result.solve {
                Some(res) => write_trace(&dir.join(format!("trace-{}.csv", engine.name())), res)?,
                None => log::warn!("no solver trace for the iterative method"),
            }
        }
        print!("{}", result.report);
        println!();
        reports.push((engine.name().to_string(), result.report.clone()));
    }
    if let Some(path) = &args.metrics {
        let rows: Vec<(String, &MetricsReport)> =
            reports.iter().map(|(n, r)| (n.clone(), r)).collect();
        write_metrics(path, &rows)?;
    }
    Ok(())
}

fn real_main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Cluster(args) => {
            let instance =
                Instance::from_features(&args.data, args.header, args.kernel, &args.problem)?;
            run_command(&instance, args.method, &args.solver, &args.output)
        }
        Command::Community(args) => {
            let instance = Instance::from_graph(&args.graph, args.delta, &args.problem)?;
            run_command(&instance, args.method, &args.solver, &args.output)
        }
        Command::Race(args) => run_race(args),
    }
}

fn main() -> std::process::ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match real_main() {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            std::process::ExitCode::FAILURE
        }
    }
}
