//! `tll-reach`: reachability analysis and verification for LTI systems under
//! two-level-lattice ReLU controllers.

mod bench;
mod svg;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use anyhow::{bail, Context as _, Result};
use clap::{ArgGroup, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;
use tllreach::io::{self, ReachResultJson};
use tllreach::{
    one_step_exact, output_box, propagate, random_problem, verify_lower_bound, Context, Error, HPolytope, Method,
    MethodChoice, Problem, Propagation,
};

#[derive(Debug, Parser)]
#[command(name = "tll-reach", version, about = "Reachability analysis for LTI systems under TLL ReLU controllers")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Write seeded random problem files.
    Generate(GenerateArgs),
    /// Compute reachable boxes for a problem file.
    Reach(ReachArgs),
    /// Check an output lower bound or compute an output box over a polytope.
    Verify(VerifyArgs),
    /// Print the controller's Lipschitz bound (max-norm on inputs and outputs).
    Lipschitz {
        #[arg(long)]
        controller: PathBuf,
    },
    /// Parse and validate a problem, controller, system or polytope file.
    Validate { file: PathBuf },
    /// Run every problem of a suite directory with the given methods.
    Bench(BenchArgs),
}

#[derive(Debug, clap::Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 2)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    m: usize,
    /// Local linear functions per output.
    #[arg(long = "N", default_value_t = 8)]
    big_n: usize,
    /// Min groups per output.
    #[arg(long = "M", default_value_t = 8)]
    big_m: usize,
    #[arg(long, default_value_t = 10)]
    count: usize,
    /// Instance `i` uses seed `seed + i`.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.1)]
    eps: f64,
    #[arg(long, default_value_t = 3)]
    steps: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    /// Exact pieces of the first step, exact boxes for every step.
    Exact,
    ExactBox,
    Grid,
    Ltllbox,
    Auto,
}

impl MethodArg {
    pub fn name(self) -> &'static str {
        match self {
            MethodArg::Exact => "exact",
            MethodArg::ExactBox => "exact-box",
            MethodArg::Grid => "grid",
            MethodArg::Ltllbox => "ltllbox",
            MethodArg::Auto => "auto",
        }
    }

    fn choice(self) -> MethodChoice {
        match self {
            MethodArg::Exact | MethodArg::ExactBox => MethodChoice::Fixed(Method::ExactBox),
            MethodArg::Grid => MethodChoice::Fixed(Method::Grid),
            MethodArg::Ltllbox => MethodChoice::Fixed(Method::LTllBox),
            MethodArg::Auto => MethodChoice::Auto,
        }
    }
}

#[derive(Debug, clap::Args)]
struct ReachArgs {
    #[arg(long)]
    problem: PathBuf,
    #[arg(long, value_enum, default_value_t = MethodArg::Auto)]
    method: MethodArg,
    /// Overrides the problem's step count.
    #[arg(long)]
    steps: Option<usize>,
    /// Overrides the problem's epsilon.
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Planar problems only.
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
#[command(group(ArgGroup::new("query").required(true).args(["lb", "outbox"])))]
struct VerifyArgs {
    #[arg(long)]
    controller: PathBuf,
    #[arg(long)]
    input_set: PathBuf,
    /// Decide whether every output is at least this value on the set.
    #[arg(long, allow_hyphen_values = true)]
    lb: Option<f64>,
    /// Compute per-output bounds on the set.
    #[arg(long)]
    outbox: bool,
    /// Accuracy of the lower bounds of `--outbox`.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
}

#[derive(Debug, clap::Args)]
struct BenchArgs {
    #[arg(long)]
    suite: PathBuf,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "ltllbox")]
    methods: Vec<MethodArg>,
    /// Per-run wall-clock limit in seconds.
    #[arg(long, default_value_t = 600.0)]
    timeout: f64,
    #[arg(long)]
    report: Option<PathBuf>,
}

/// Writes one JSON object to stdout. A closed pipe is not an error.
fn print_json<T: Serialize>(value: &T) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{}", io::to_json_string(value));
}

fn generate(args: &GenerateArgs) -> Result<()> {
    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let mut files = Vec::with_capacity(args.count);
    for i in 0..args.count {
        let seed = args.seed + i as u64;
        let (c, s, x0) = random_problem(args.n, args.m, args.big_n, args.big_m, seed)?;
        let problem = Problem::new(c, s, x0, args.eps, args.steps)?;
        let name = format!("n{}_m{}_N{}_M{}_{seed:04}.json", args.n, args.m, args.big_n, args.big_m);
        let path = args.out.join(&name);
        io::save_problem(&problem, &path)?;
        files.push(json!({ "file": path, "seed": seed }));
    }
    print_json(&json!({ "generated": files }));
    Ok(())
}

fn reach(args: &ReachArgs) -> Result<()> {
    let problem = io::load_problem(&args.problem)?;
    let epsilon = args.eps.unwrap_or(problem.epsilon);
    let steps = args.steps.unwrap_or(problem.steps);
    let (sys, ctrl, x0) = (&problem.system, &problem.controller, &problem.x0);
    let ctx = Context::default();
    let start = Instant::now();
    let pieces = match args.method {
        MethodArg::Exact => Some(one_step_exact(sys, ctrl, x0, &ctx)?),
        _ => None,
    };
    let prop: Propagation = propagate(sys, ctrl, x0, epsilon, steps, args.method.choice(), &ctx)?;
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;
    for (t, sel) in prop.selections.iter().enumerate() {
        if let Some(s) = sel {
            tracing::info!(
                step = t + 1,
                exact_box_ops = s.exact_box.predicted_ops,
                grid_ops = s.grid.predicted_ops,
                chosen = %s.chosen.method,
                "method selection"
            );
        }
    }
    let mut result = ReachResultJson::new(&prop, ctx.stats.snapshot(), Some(wall_ms));
    result.pieces = pieces.as_ref().map(|p| p.to_json().pieces);
    if let Some(out) = &args.out {
        io::write_json(&result, out)?;
    }
    if let Some(path) = &args.svg {
        if sys.state_dim() != 2 {
            tracing::warn!("skipping SVG output: the state space is not planar");
        } else {
            let polys: Vec<HPolytope> = pieces
                .map(|p| p.pieces.into_iter().map(|piece| piece.polytope).collect())
                .unwrap_or_default();
            std::fs::write(path, svg::render(x0, &polys, &prop.boxes))
                .with_context(|| format!("writing {}", path.display()))?;
        }
    }
    print_json(&result);
    Ok(())
}

fn verify(args: &VerifyArgs) -> Result<()> {
    let ctrl = io::load_controller(&args.controller)?;
    let p = io::load_polytope(&args.input_set)?;
    let ctx = Context::default();
    if let Some(a) = args.lb {
        let mut outputs = Vec::new();
        let mut holds = true;
        for (k, t) in ctrl.components().iter().enumerate() {
            let r = verify_lower_bound(t, &p, a, &ctx)?;
            holds &= r.holds;
            outputs.push(json!({
                "output": k + 1,
                "holds": r.holds,
                "counterexample": r.counterexample,
                "cells": r.cells,
            }));
        }
        print_json(&json!({ "query": "lower_bound", "a": a, "holds": holds, "outputs": outputs }));
    } else {
        let ob = output_box(&ctrl, &p, args.tol, &ctx)?;
        print_json(&json!({ "query": "output_box", "tol": ob.tol, "lo": ob.bounds.lo, "hi": ob.bounds.hi }));
    }
    Ok(())
}

fn lipschitz(controller: &Path) -> Result<()> {
    let ctrl = io::load_controller(controller)?;
    let per_output: Vec<f64> = ctrl.components().iter().map(|t| t.lipschitz_bound()).collect();
    print_json(&json!({ "lipschitz": ctrl.lipschitz_bound(), "per_output": per_output }));
    Ok(())
}

fn validate(file: &Path) -> Result<()> {
    let kind = io::validate_file(file)?;
    print_json(&json!({ "valid": true, "kind": kind }));
    Ok(())
}

fn run_bench(args: &BenchArgs) -> Result<()> {
    if !args.timeout.is_finite() || args.timeout <= 0.0 {
        bail!("timeout must be positive");
    }
    let report = bench::run(&args.suite, &args.methods, Duration::from_secs_f64(args.timeout))?;
    if let Some(path) = &args.report {
        io::write_json(&report, path)?;
    }
    print_json(&report);
    Ok(())
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("TLLREACH_THREADS") else {
        return Ok(());
    };
    let k: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|k| *k > 0)
        .with_context(|| format!("TLLREACH_THREADS must be a positive integer, got '{v}'"))?;
    rayon::ThreadPoolBuilder::new().num_threads(k).build_global()?;
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    configure_threads()?;
    match &cli.command {
        Cmd::Generate(a) => generate(a),
        Cmd::Reach(a) => reach(a),
        Cmd::Verify(a) => verify(a),
        Cmd::Lipschitz { controller } => lipschitz(controller),
        Cmd::Validate { file } => validate(file),
        Cmd::Bench(a) => run_bench(a),
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let mut report = json!({ "error": format!("{e:#}") });
            if matches!(cli.command, Cmd::Validate { .. }) {
                report["valid"] = json!(false);
            }
            if let Some(Error::Step { step, partial, .. }) = e.downcast_ref::<Error>() {
                report["failed_step"] = json!(step);
                report["partial_boxes"] = json!(partial);
            }
            print_json(&report);
            let cost = e.downcast_ref::<Error>().is_some_and(Error::is_cost_abort);
            ExitCode::from(if cost { 2 } else { 1 })
        }
    }
}
