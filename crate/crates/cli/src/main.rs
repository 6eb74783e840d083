//! `rowsketch` command-line front end.
//!
//! Every subcommand prints one JSON report on stdout, including on failure.
//! Exit status: 0 success, 1 a requested check failed, 2 usage, input or
//! internal error, 3 non-convergence.

mod bench;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use rowsketch::fast::approx_generalized_leverage;
use rowsketch::leverage::{exact_leverage_scores, generalized_leverage_scores, read_scores, write_scores};
use rowsketch::matrix::{read_matrix_market, read_sample, read_vector, write_sample, write_vector};
use rowsketch::pipelines::{
    cgls, generic_scheme, input_sparsity_sketch, preconditioner, refinement_sampling, repeated_halving,
    GenericSchemeParams, Preset, SketchResult,
};
use rowsketch::reweight::{compute_reweighting, write_reweighting};
use rowsketch::verify::{spectral_check, DEFAULT_CHECK_TOL};
use rowsketch::{Error, ScoreVector, SketchConfig, SparseRowMatrix};

#[derive(Parser)]
#[command(
    name = "rowsketch",
    version,
    about = "Leverage-score row sampling and spectral sketching"
)]
struct Cli {
    /// Print a one-line summary to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Leverage scores of every row, exact by default.
    Scores(ScoresArgs),
    /// Sample a spectral approximation of the rows of a matrix.
    Sketch(SketchArgs),
    /// Downweight rows until every leverage score meets its target.
    Reweight(ReweightArgs),
    /// Check that a sample is a one-sided spectral approximation.
    Verify(VerifyArgs),
    /// Least squares preconditioned by a sketch.
    Solve(SolveArgs),
    /// Run the built-in benchmark corpus.
    Bench(BenchArgs),
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Accuracy of the final sample.
    #[arg(long, default_value_t = 0.5)]
    epsilon: f64,
    /// Oversampling constant in the sampling probabilities.
    #[arg(long)]
    c: Option<f64>,
    /// Exponent of the JL distortion `d^θ` where a pipeline allows it.
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long, default_value_t = rowsketch::config::DEFAULT_SEED)]
    seed: u64,
}

impl ConfigArgs {
    fn config(&self) -> SketchConfig {
        let mut cfg = SketchConfig {
            epsilon: self.epsilon,
            seed: self.seed,
            ..SketchConfig::default()
        };
        if let Some(c) = self.c {
            cfg.c = c;
        }
        if let Some(t) = self.theta {
            cfg.theta = t;
        }
        cfg
    }
}

#[derive(Args)]
struct ScoresArgs {
    matrix: PathBuf,
    /// Scores with respect to this matrix instead of the input itself.
    #[arg(long)]
    wrt: Option<PathBuf>,
    /// JL estimates instead of exact values.
    #[arg(long)]
    fast: bool,
    #[arg(long, default_value_t = 0.25)]
    theta: f64,
    #[arg(long, default_value_t = rowsketch::config::DEFAULT_SEED)]
    seed: u64,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Halving,
    Refinement,
    Generic,
    InputSparsity,
}

#[derive(Args)]
struct SketchArgs {
    matrix: PathBuf,
    #[arg(long, value_enum, default_value_t = Method::Halving)]
    method: Method,
    /// Parameter preset for `--method generic`: head-recursive,
    /// tail-recursive, refinement or sqrt-balanced.
    #[arg(long, default_value = "head-recursive")]
    preset: Preset,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct ReweightArgs {
    matrix: PathBuf,
    /// Uniform target `u_i = α`.
    #[arg(long, conflicts_with = "targets", required_unless_present = "targets")]
    alpha: Option<f64>,
    /// Per-row targets as a `row_index<TAB>score` file.
    #[arg(long)]
    targets: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Sweep budget; defaults to 100 times the row count.
    #[arg(long)]
    max_sweeps: Option<usize>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    matrix: PathBuf,
    sample: PathBuf,
    #[arg(long)]
    lambda: f64,
    #[arg(long, default_value_t = DEFAULT_CHECK_TOL)]
    tol: f64,
}

#[derive(Args)]
struct SolveArgs {
    matrix: PathBuf,
    rhs: PathBuf,
    #[arg(long, value_enum, default_value_t = Method::Halving)]
    method: Method,
    #[command(flatten)]
    config: ConfigArgs,
    /// Relative normal-equation residual to stop at.
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 1000)]
    max_iters: usize,
    /// Run plain CGLS without building a sketch.
    #[arg(long)]
    unpreconditioned: bool,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Suite {
    Desk,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_enum, default_value_t = Suite::Desk)]
    suite: Suite,
    #[arg(long, default_value_t = rowsketch::config::DEFAULT_SEED)]
    seed: u64,
    /// Also write the results table here as TSV.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

/// Outcome of a subcommand: its report and exit status.
struct Outcome {
    report: Value,
    code: u8,
}

impl Outcome {
    fn ok(report: Value) -> Self {
        Outcome { report, code: 0 }
    }
}

fn error_outcome(e: &anyhow::Error) -> Outcome {
    let (status, code, extra) = match e.downcast_ref::<Error>() {
        Some(Error::NonConvergence { iterations, detail }) => (
            "non-convergence",
            3,
            json!({ "iterations": iterations, "detail": detail }),
        ),
        Some(Error::ReweightNonConvergence {
            sweeps,
            weights,
            violations,
        }) => (
            "non-convergence",
            3,
            json!({ "sweeps_used": sweeps, "weights": weights, "violations": violations }),
        ),
        _ => ("error", 2, Value::Null),
    };
    let mut report = json!({ "status": status, "message": format!("{e:#}") });
    if let Value::Object(m) = extra {
        report.as_object_mut().unwrap().extend(m);
    }
    Outcome { report, code }
}

fn load(path: &PathBuf) -> anyhow::Result<SparseRowMatrix> {
    Ok(read_matrix_market(path)?)
}

fn run_sketch(
    a: &SparseRowMatrix,
    method: Method,
    preset: Preset,
    cfg: &SketchConfig,
) -> rowsketch::Result<SketchResult> {
    match method {
        Method::Halving => repeated_halving(a, cfg),
        Method::Refinement => refinement_sampling(a, cfg),
        Method::Generic => generic_scheme(a, GenericSchemeParams::preset(preset, a.n_rows(), cfg), cfg),
        Method::InputSparsity => input_sparsity_sketch(a, cfg.theta, cfg.epsilon, cfg),
    }
}

fn scores(args: &ScoresArgs) -> anyhow::Result<Outcome> {
    let a = load(&args.matrix)?;
    let b = args.wrt.as_ref().map(load).transpose()?;
    let s: ScoreVector = if args.fast {
        let cfg = SketchConfig {
            theta: args.theta,
            seed: args.seed,
            ..SketchConfig::default()
        };
        approx_generalized_leverage(&a, b.as_ref().unwrap_or(&a), args.theta, &cfg)?
    } else if let Some(b) = &b {
        generalized_leverage_scores(&a, b, rowsketch::config::DEFAULT_KERNEL_TOL)?
    } else {
        exact_leverage_scores(&a)
    };
    write_scores(&args.output, &s)?;
    Ok(Outcome::ok(json!({
        "status": "ok",
        "rows": s.len(),
        "infinite": s.infinite_count(),
        "sum_finite": s.sum_finite(),
        "fast": args.fast,
    })))
}

fn sketch(args: &SketchArgs) -> anyhow::Result<Outcome> {
    let a = load(&args.matrix)?;
    let cfg = args.config.config();
    let r = run_sketch(&a, args.method, args.preset, &cfg)?;
    write_sample(&args.output, &r.sample)?;
    let mut report = serde_json::to_value(&r)?;
    report["status"] = json!("ok");
    report["config"] = serde_json::to_value(&cfg)?;
    Ok(Outcome::ok(report))
}

fn reweight(args: &ReweightArgs) -> anyhow::Result<Outcome> {
    let a = load(&args.matrix)?;
    let u = match (&args.targets, args.alpha) {
        (Some(p), _) => read_scores(p)?,
        (None, Some(alpha)) => ScoreVector::from_finite(vec![alpha; a.n_rows()]),
        (None, None) => anyhow::bail!("one of --alpha or --targets is required"),
    };
    let sweeps = args.max_sweeps.unwrap_or(100 * a.n_rows().max(1));
    let (w, cert) = compute_reweighting(&a, &u, args.tol, sweeps)?;
    write_reweighting(&args.output, &w)?;
    let mut report = serde_json::to_value(&cert)?;
    report["status"] = json!("ok");
    Ok(Outcome::ok(report))
}

fn verify(args: &VerifyArgs) -> anyhow::Result<Outcome> {
    let a = load(&args.matrix)?;
    let s = read_sample(&args.sample)?;
    if s.parent_rows() != a.n_rows() {
        return Err(Error::DimensionMismatch(format!(
            "sample indexes {} rows but the matrix has {}",
            s.parent_rows(),
            a.n_rows()
        ))
        .into());
    }
    let at = rowsketch::matrix::materialize_sample(&a, &s)?;
    let rep = spectral_check(&a, &at, args.lambda, args.tol)?;
    let mut report = serde_json::to_value(&rep)?;
    report["status"] = json!(if rep.passes { "pass" } else { "fail" });
    Ok(Outcome {
        report,
        code: if rep.passes { 0 } else { 1 },
    })
}

fn solve(args: &SolveArgs) -> anyhow::Result<Outcome> {
    let a = load(&args.matrix)?;
    let b = read_vector(&args.rhs)?;
    let cfg = args.config.config();
    let (z, sketch) = if args.unpreconditioned {
        (None, Value::Null)
    } else {
        let r = run_sketch(&a, args.method, Preset::HeadRecursive, &cfg)?;
        (Some(preconditioner(&a, &r)?), serde_json::to_value(&r)?)
    };
    let rep = cgls(&a, &b, z.as_ref(), args.tol, args.max_iters)?;
    write_vector(&args.output, &rep.x)?;
    let mut report = serde_json::to_value(&rep)?;
    report["sketch"] = sketch;
    report["status"] = json!(if rep.converged { "ok" } else { "non-convergence" });
    Ok(Outcome {
        report,
        code: if rep.converged { 0 } else { 3 },
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            let report = json!({ "status": "error", "message": e.kind().to_string() });
            println!(
                "{}",
                serde_json::to_string_pretty(&report).expect("report serializes")
            );
            return ExitCode::from(2);
        }
    };
    let started = Instant::now();
    let result = match &cli.command {
        Command::Scores(a) => scores(a),
        Command::Sketch(a) => sketch(a),
        Command::Reweight(a) => reweight(a),
        Command::Verify(a) => verify(a),
        Command::Solve(a) => solve(a),
        Command::Bench(a) => bench::run(a.seed, a.output.as_deref()).map(Outcome::ok),
    };
    let mut out = result.unwrap_or_else(|e| {
        eprintln!("rowsketch: {e:#}");
        error_outcome(&e)
    });
    // kept in its own field so the rest of the report is reproducible
    if !out.report["timing"].is_object() {
        out.report["timing"] = json!({});
    }
    out.report["timing"]["wall_seconds"] = json!(started.elapsed().as_secs_f64());
    println!(
        "{}",
        serde_json::to_string_pretty(&out.report).expect("report serializes")
    );
    if cli.verbose {
        eprintln!("rowsketch: {} (exit {})", out.report["status"], out.code);
    }
    ExitCode::from(out.code)
}
