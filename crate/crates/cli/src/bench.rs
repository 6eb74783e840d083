use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use anyhow::Context;
use serde::Serialize;
use serde_json::{json, Value};

use rowsketch::corpus;
use rowsketch::pipelines::{
    generic_scheme, input_sparsity_sketch, refinement_sampling, repeated_halving, GenericSchemeParams, Preset,
};
use rowsketch::verify::{spectral_check, DEFAULT_CHECK_TOL};
use rowsketch::{SketchConfig, SparseRowMatrix};

/// Oversampling constant for the desk suite. The library default keeps
/// nearly every row at these sizes, which says little about the sketchers.
pub const DESK_C: f64 = 1.0;

#[derive(Serialize)]
struct Row {
    matrix: String,
    method: String,
    n: usize,
    d: usize,
    nnz: usize,
    rows_kept: usize,
    lambda: f64,
    lambda_low: f64,
    lambda_high: f64,
    passes: bool,
    solve_count: u64,
    factorization_count: u64,
    #[serde(skip)]
    seconds: f64,
}

const COLUMNS: [&str; 13] = [
    "matrix",
    "method",
    "n",
    "d",
    "nnz",
    "rows_kept",
    "lambda",
    "lambda_low",
    "lambda_high",
    "passes",
    "solve_count",
    "factorization_count",
    "seconds",
];

fn desk_matrices(seed: u64) -> Vec<(&'static str, SparseRowMatrix)> {
    vec![
        ("gaussian-4096x16", corpus::gaussian(4096, 16, seed)),
        ("power-law-4096x16", corpus::power_law(4096, 16, seed, 1.5)),
        ("sparse-8192x16", corpus::sparse_gaussian(8192, 16, 0.25, seed)),
        (
            "isolated-4096x16",
            corpus::isolated_direction(4096, 16, 1234, seed),
        ),
        (
            "ill-conditioned-4096x16",
            corpus::ill_conditioned(4096, 16, 1e6, seed),
        ),
        ("stacked-identity-2048x8", corpus::stacked_identity(256, 8)),
    ]
}

const METHODS: [&str; 5] = [
    "halving",
    "refinement",
    "input-sparsity",
    "generic-sqrt-balanced",
    "generic-tail-recursive",
];

/// Runs every corpus matrix through every method; one table row per pair.
pub fn run(seed: u64, output: Option<&Path>) -> anyhow::Result<Value> {
    let cfg = SketchConfig {
        c: DESK_C,
        seed,
        ..SketchConfig::default()
    };
    let mut rows = Vec::new();
    for (name, a) in desk_matrices(seed) {
        for method in METHODS {
            let t = Instant::now();
            let r = match method {
                "halving" => repeated_halving(&a, &cfg),
                "refinement" => refinement_sampling(&a, &cfg),
                "input-sparsity" => input_sparsity_sketch(&a, 0.5, cfg.epsilon, &cfg),
                "generic-sqrt-balanced" => generic_scheme(
                    &a,
                    GenericSchemeParams::preset(Preset::SqrtBalanced, a.n_rows(), &cfg),
                    &cfg,
                ),
                _ => generic_scheme(
                    &a,
                    GenericSchemeParams::preset(Preset::TailRecursive, a.n_rows(), &cfg),
                    &cfg,
                ),
            }
            .with_context(|| format!("{method} on {name}"))?;
            let seconds = t.elapsed().as_secs_f64();
            let check = spectral_check(&a, &r.materialize(&a)?, r.lambda, DEFAULT_CHECK_TOL)?;
            rows.push(Row {
                matrix: name.to_string(),
                method: method.to_string(),
                n: a.n_rows(),
                d: a.n_cols(),
                nnz: a.nnz(),
                rows_kept: r.rows_kept,
                lambda: r.lambda,
                lambda_low: check.lambda_low,
                lambda_high: check.lambda_high,
                passes: check.passes,
                solve_count: r.solve_count,
                factorization_count: r.factorization_count,
                seconds,
            });
        }
    }
    if let Some(path) = output {
        std::fs::write(path, table(&rows)).with_context(|| format!("writing {}", path.display()))?;
    }
    let seconds: Vec<f64> = rows.iter().map(|r| r.seconds).collect();
    Ok(json!({
        "status": "ok",
        "suite": "desk",
        "seed": seed,
        "c": DESK_C,
        "rows": rows,
        "timing": { "row_seconds": seconds },
    }))
}

fn table(rows: &[Row]) -> String {
    let mut s = COLUMNS.join("\t");
    s.push('\n');
    for r in rows {
        writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}\t{}\t{:.6}\t{:.6e}\t{:.6e}\t{}\t{}\t{}\t{:.3}",
            r.matrix,
            r.method,
            r.n,
            r.d,
            r.nnz,
            r.rows_kept,
            r.lambda,
            r.lambda_low,
            r.lambda_high,
            r.passes,
            r.solve_count,
            r.factorization_count,
            r.seconds
        )
        .expect("writing to a String");
    }
    s
}
