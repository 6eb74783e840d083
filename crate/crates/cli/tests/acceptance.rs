//! Acceptance suite: one line per criterion, nonzero exit if any fails.
//!
//! Reference values come from dense SVD oracles written here, independent
//! of the library's factorization path.

use std::process::Command;
use std::time::{Duration, Instant};

use anyhow::{ensure, Result};
use nalgebra::DMatrix;

use rowsketch::config::log_d;
use rowsketch::corpus;
use rowsketch::fast::approx_generalized_leverage;
use rowsketch::matrix::{materialize_sample, write_matrix_market, write_sample, write_vector};
use rowsketch::pipelines::{
    cgls, final_refinement, generic_scheme, input_sparsity_sketch, precondition_solve, refinement_estimates,
    refinement_sampling, repeated_halving, GenericSchemeParams, Preset, SketchResult,
};
use rowsketch::reweight::{compare_leverage_bound, compute_reweighting, rank_one_update, Reweighting};
use rowsketch::rng::{counter_uniform, derive_seed};
use rowsketch::sampling::{
    sample, sherman_morrison_check, uniform_leverage_estimates, uniform_no_reweight_estimates, uniform_subset,
};
use rowsketch::verify::{monte_carlo, spectral_check, trial_seed, Trial};
use rowsketch::{DenseVector, ScoreVector, SketchConfig, SparseRowMatrix};

const MASTER_SEED: u64 = 20_240_601;

/// Constant used by the end-to-end row-count runs (criteria 8 and 9).
const END_TO_END_C: f64 = 1.0;

type Criterion = fn() -> Result<Verdict>;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Result<Verdict> {
    Ok(Verdict { pass, detail })
}

fn rand_at(seed: u64, k: u64) -> f64 {
    counter_uniform(seed, k)
}

/// `τ_i` as squared row norms of the left singular vectors, rank cut at
/// `1e-10 σ_max`.
fn oracle_leverage(m: &DMatrix<f64>) -> Vec<f64> {
    let svd = m.clone().svd(true, false);
    let u = svd.u.unwrap();
    let smax = svd.singular_values.max();
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&k| svd.singular_values[k] > 1e-10 * smax)
        .collect();
    (0..m.nrows())
        .map(|i| keep.iter().map(|&k| u[(i, k)].powi(2)).sum())
        .collect()
}

fn matrix_for(seed: u64, n: usize, d: usize, power_law: bool) -> SparseRowMatrix {
    if power_law {
        corpus::power_law(n, d, seed, 1.5)
    } else {
        corpus::gaussian(n, d, seed)
    }
}

fn count_below(est: &ScoreVector, tau: &[f64]) -> usize {
    est.finite_or(f64::INFINITY)
        .iter()
        .zip(tau)
        .filter(|(e, t)| **e < **t - 1e-8)
        .count()
}

fn c1_overestimation() -> Result<Verdict> {
    let mut violations = 0;
    let mut checked = 0;
    for t in 0..100u64 {
        let seed = trial_seed(MASTER_SEED ^ 1, t as usize);
        let n = [256, 1024][(t % 2) as usize];
        let d = [8, 16][((t / 2) % 2) as usize];
        let a = matrix_for(seed, n, d, t % 4 >= 2);
        let tau = oracle_leverage(&a.to_dense());
        let cfg = SketchConfig::default().with_seed(seed);
        let halving = repeated_halving(
            &a,
            &SketchConfig {
                c: END_TO_END_C,
                ..cfg.clone()
            },
        )?;
        let estimators = [
            uniform_leverage_estimates(&a, n / 4, &cfg)?,
            uniform_no_reweight_estimates(&a, n / 4, &cfg)?,
            refinement_estimates(&a, &cfg)?.estimates,
            approx_generalized_leverage(&a, &halving.materialize(&a)?, cfg.theta, &cfg)?,
        ];
        for est in &estimators {
            violations += count_below(est, &tau);
            checked += n;
        }
    }
    verdict(
        violations == 0,
        format!("{violations} violations in {checked} row estimates"),
    )
}

fn c2_expectation() -> Result<Verdict> {
    let (n, d, m) = (1024, 16, 128);
    let start = Instant::now();
    let rep = monte_carlo("uniform-estimate-sum", MASTER_SEED ^ 2, 200, |seed| {
        let a = corpus::gaussian(n, d, seed);
        let u = uniform_leverage_estimates(&a, m, &SketchConfig::default().with_seed(seed))?;
        Ok(Trial::new(u.sum_finite(), true))
    })?;
    let elapsed = start.elapsed();
    let bound = (n * d) as f64 / m as f64 * 1.15;
    verdict(
        rep.mean <= bound && elapsed < Duration::from_secs(30),
        format!(
            "mean {:.2} ± {:.2} vs {bound:.1}, {:.1}s",
            rep.mean,
            rep.stderr,
            elapsed.as_secs_f64()
        ),
    )
}

fn c3_sherman_morrison() -> Result<Verdict> {
    let mut worst: f64 = 0.0;
    for t in 0..50u64 {
        let seed = trial_seed(MASTER_SEED ^ 3, t as usize);
        let d = 4 + (t % 5) as usize;
        let n = 60 + 10 * (t % 7) as usize;
        let a = matrix_for(seed, n, d, t % 2 == 1);
        let s = uniform_subset(n, 3 * d, derive_seed(seed, 1))?;
        let mask = s.mask();
        let outside: Vec<usize> = (0..n).filter(|&i| !mask[i]).collect();
        let i = outside[(rand_at(seed, 0) * outside.len() as f64) as usize];
        let (closed, _) = sherman_morrison_check(&a, &s, i)?;
        // direct: leverage of row i inside the stacked matrix [SA; a_i]
        let mut idx: Vec<usize> = s.indices().collect();
        idx.push(i);
        let stacked = a.select_rows(&idx)?.to_dense();
        let direct = *oracle_leverage(&stacked).last().unwrap();
        worst = worst.max((closed - direct).abs());
    }
    verdict(worst <= 1e-8, format!("max |closed − direct| = {worst:.2e}"))
}

fn c4_rank_one() -> Result<Verdict> {
    let mut worst: f64 = 0.0;
    let mut wrong_direction = 0;
    for t in 0..100u64 {
        let seed = trial_seed(MASTER_SEED ^ 4, t as usize);
        let d = 3 + (t % 6) as usize;
        let n = 40 + 5 * (t % 9) as usize;
        let a = matrix_for(seed, n, d, t % 2 == 1);
        let i = (rand_at(seed, 0) * n as f64) as usize;
        let gamma = 0.01 + 0.98 * rand_at(seed, 1);
        let dense = a.to_dense();
        let tau = oracle_leverage(&dense);
        let mut pinv = (dense.transpose() * &dense).pseudo_inverse(1e-12).unwrap();
        pinv = &dense * pinv * dense.transpose();
        let cross: Vec<f64> = (0..n).map(|j| pinv[(i, j)]).collect();
        let updated = rank_one_update(&tau, &cross, i, gamma)?;
        let mut scaled = dense.clone();
        scaled.row_mut(i).scale_mut((1.0 - gamma).sqrt());
        let fresh = oracle_leverage(&scaled);
        for j in 0..n {
            worst = worst.max((updated[j] - fresh[j]).abs());
            let moved_right = if j == i {
                updated[j] <= tau[j] + 1e-12
            } else {
                updated[j] >= tau[j] - 1e-12
            };
            wrong_direction += usize::from(!moved_right);
        }
    }
    verdict(
        worst <= 1e-8 && wrong_direction == 0,
        format!("max error {worst:.2e}, {wrong_direction} monotonicity violations"),
    )
}

fn one_sided_exact_sample(
    a: &SparseRowMatrix,
    epsilon: f64,
    cfg: &SketchConfig,
) -> rowsketch::Result<SparseRowMatrix> {
    let tau = ScoreVector::from_finite(oracle_leverage(&a.to_dense()));
    let s = sample(a, &tau, epsilon.powi(-2), cfg)?.scaled(1.0 / (1.0 + epsilon).sqrt())?;
    materialize_sample(a, &s)
}

fn c5_sampling_lemma() -> Result<Verdict> {
    let (n, d, eps) = (200, 8, 0.5);
    let rep = monte_carlo("exact-score-sample", MASTER_SEED ^ 5, 100, |seed| {
        let a = corpus::gaussian(n, d, seed);
        let cfg = SketchConfig {
            c: 12.0,
            ..SketchConfig::default().with_seed(seed)
        };
        let at = one_sided_exact_sample(&a, eps, &cfg)?;
        let check = spectral_check(&a, &at, 3.0, 1e-6)?;
        Ok(Trial::new(at.n_rows() as f64, check.passes))
    })?;
    let passed = (rep.pass_fraction * 100.0).round() as usize;
    verdict(
        passed >= 95,
        format!("{passed}/100 pass, mean rows {:.1}", rep.mean),
    )
}

fn c6_reweighting() -> Result<Verdict> {
    let mut failures = Vec::new();
    let mut worst_excess = f64::NEG_INFINITY;
    for t in 0..20u64 {
        let seed = trial_seed(MASTER_SEED ^ 6, t as usize);
        let (n, d) = (256, 8);
        let a = matrix_for(seed, n, d, t % 2 == 1);
        for mult in [2.0, 8.0] {
            let alpha = mult * d as f64 / n as f64;
            let u = ScoreVector::from_finite(vec![alpha; n]);
            let (w, cert) = compute_reweighting(&a, &u, 1e-7, 100 * n)?;
            let tau = oracle_leverage(&a.scale_rows(&w.weights)?.to_dense());
            let excess = tau.iter().map(|t| t - alpha).fold(f64::NEG_INFINITY, f64::max);
            worst_excess = worst_excess.max(excess);
            let changed = w.weights.iter().filter(|&&x| x != 1.0).count();
            let mass = changed as f64 * alpha;
            let ok = excess <= 1e-6
                && mass <= d as f64 + 1e-6
                && changed as f64 <= d as f64 / alpha + 1.0
                && cert.reweighted_count == changed;
            if !ok {
                failures.push(format!(
                    "seed {t} α={alpha}: excess {excess:.2e}, mass {mass:.3}, count {changed}"
                ));
            }
        }
    }
    verdict(
        failures.is_empty(),
        if failures.is_empty() {
            format!("40 runs, worst τ(WA) − u = {worst_excess:.2e}")
        } else {
            failures.join("; ")
        },
    )
}

fn c7_refinement_halving() -> Result<Verdict> {
    let (n, d) = (4096usize, 16usize);
    let it_bound = (n as f64 / d as f64).log2().ceil() as usize + 3;
    let rep = monte_carlo("refinement-halving", MASTER_SEED ^ 7, 100, |seed| {
        let a = corpus::gaussian(n, d, seed);
        let est = refinement_estimates(&a, &SketchConfig::default().with_seed(seed))?;
        let worst = est.history.windows(2).map(|w| w[1] / w[0]).fold(0.0, f64::max);
        Ok(Trial::new(worst, worst <= 0.6 && est.iterations <= it_bound))
    })?;
    let passed = (rep.pass_fraction * 100.0).round() as usize;
    verdict(
        passed >= 90,
        format!(
            "{passed}/100 pass, worst ratio {:.3}, iteration bound {it_bound}",
            rep.max
        ),
    )
}

fn c8_end_to_end() -> Result<Verdict> {
    let (n, d, eps) = (8192usize, 16usize, 0.5);
    let row_bound = 40.0 * d as f64 * log_d(d) / (eps * eps);
    let start = Instant::now();
    let mut parts = Vec::new();
    let mut all = true;
    type Runner = fn(&SparseRowMatrix, &SketchConfig) -> rowsketch::Result<SketchResult>;
    let methods: [(&str, Runner); 3] = [
        ("halving", repeated_halving),
        ("refinement", refinement_sampling),
        ("input-sparsity", |a, cfg| {
            input_sparsity_sketch(a, 0.5, cfg.epsilon, cfg)
        }),
    ];
    for (name, run) in methods {
        let rep = monte_carlo(name, MASTER_SEED ^ 8, 100, |seed| {
            let a = corpus::gaussian(n, d, seed);
            let cfg = SketchConfig {
                c: END_TO_END_C,
                epsilon: eps,
                ..SketchConfig::default().with_seed(seed)
            };
            let r = run(&a, &cfg)?;
            let check = spectral_check(&a, &r.materialize(&a)?, r.lambda, 1e-6)?;
            Ok(Trial::new(
                r.rows_kept as f64,
                check.passes && (r.rows_kept as f64) <= row_bound,
            ))
        })?;
        let passed = (rep.pass_fraction * 100.0).round() as usize;
        all &= passed >= 90;
        parts.push(format!("{name} {passed}/100 max rows {}", rep.max));
    }
    let elapsed = start.elapsed();
    all &= elapsed < Duration::from_secs(180);
    verdict(
        all,
        format!(
            "{}; row bound {row_bound:.0}; {:.1}s",
            parts.join(", "),
            elapsed.as_secs_f64()
        ),
    )
}

fn c9_isolated_direction() -> Result<Verdict> {
    let (n, d) = (4096usize, 16usize);
    let mut lost = 0;
    let mut uniform_lost = 0;
    for t in 0..100u64 {
        let seed = trial_seed(MASTER_SEED ^ 9, t as usize);
        let at = (rand_at(seed, 0) * n as f64) as usize;
        let a = corpus::isolated_direction(n, d, at, seed);
        let cfg = SketchConfig {
            c: END_TO_END_C,
            ..SketchConfig::default().with_seed(seed)
        };
        let mut outputs = vec![
            repeated_halving(&a, &cfg)?,
            refinement_sampling(&a, &cfg)?,
            input_sparsity_sketch(&a, 0.5, cfg.epsilon, &cfg)?,
        ];
        for p in [
            Preset::HeadRecursive,
            Preset::TailRecursive,
            Preset::Refinement,
            Preset::SqrtBalanced,
        ] {
            outputs.push(generic_scheme(&a, GenericSchemeParams::preset(p, n, &cfg), &cfg)?);
        }
        let refined = final_refinement(&a, &outputs[0], cfg.epsilon, &cfg)?;
        outputs.push(refined);
        for r in &outputs {
            let check = spectral_check(&a, &r.materialize(&a)?, r.lambda, 1e-6)?;
            lost += usize::from(!check.rank_match || check.rank_atilde != d);
        }
        // the naive alternative at the size halving chose
        let s = uniform_subset(n, outputs[0].rows_kept, derive_seed(seed, 1))?;
        uniform_lost += usize::from(!s.contains(at));
    }
    verdict(
        lost == 0,
        format!(
            "{lost} rank losses over 800 pipeline outputs; uniform sampling lost rank {uniform_lost}/100"
        ),
    )
}

fn c10_comparison() -> Result<Verdict> {
    let mut violations = 0;
    let mut tightest = f64::INFINITY;
    for t in 0..200u64 {
        let seed = trial_seed(MASTER_SEED ^ 10, t as usize);
        let d = 3 + (t % 5) as usize;
        let n = 30 + 3 * (t % 11) as usize;
        let a = matrix_for(seed, n, d, t % 2 == 1);
        let w: Vec<f64> = (0..n).map(|k| 0.05 + 0.95 * rand_at(seed, k as u64)).collect();
        let wbar: Vec<f64> = (0..n)
            .map(|k| (w[k] + 0.3 * (rand_at(seed, (n + k) as u64) - 0.5)).clamp(0.05, 1.0))
            .collect();
        let i = (rand_at(seed, (2 * n) as u64) * n as f64) as usize;
        let (lhs, rhs) = compare_leverage_bound(&a, &Reweighting::new(w)?, &Reweighting::new(wbar)?, i)?;
        violations += usize::from(lhs > rhs + 1e-8);
        tightest = tightest.min(rhs - lhs);
    }
    verdict(
        violations == 0,
        format!("{violations}/200 violations, min slack {tightest:.2e}"),
    )
}

fn c11_preconditioning() -> Result<Verdict> {
    let (n, d) = (4096usize, 16usize);
    let a = corpus::ill_conditioned(n, d, 1e6, MASTER_SEED ^ 11);
    let b = DenseVector(
        (0..n)
            .map(|k| rand_at(MASTER_SEED ^ 11, k as u64) - 0.5)
            .collect(),
    );
    let sketch = repeated_halving(&a, &SketchConfig::default())?;
    let pre = precondition_solve(&a, &b, &sketch, 1e-8, 1000)?;
    let plain = cgls(&a, &b, None, 1e-8, 100_000)?;
    ensure!(
        plain.converged,
        "unpreconditioned run did not converge in 100000 iterations"
    );
    verdict(
        pre.iterations <= 50 && plain.iterations > 1000,
        format!(
            "preconditioned {} iterations (≤ 50), unpreconditioned {} (> 1000 required)",
            pre.iterations, plain.iterations
        ),
    )
}

fn run_cli(args: &[&str]) -> Result<(i32, String)> {
    let out = Command::new(env!("CARGO_BIN_EXE_rowsketch"))
        .args(args)
        .output()?;
    let mut report: serde_json::Value = serde_json::from_slice(&out.stdout)?;
    if let Some(m) = report.as_object_mut() {
        m.remove("timing");
    }
    Ok((out.status.code().unwrap_or(-1), report.to_string()))
}

fn c12_determinism() -> Result<Verdict> {
    let dir = tempfile::tempdir()?;
    let p = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    let a = corpus::power_law(3000, 8, 12, 1.5);
    write_matrix_market(p("a.mtx"), &a)?;
    write_matrix_market(
        p("b.mtx"),
        &corpus::gaussian(40, 8, 13).select_rows(&(0..6).collect::<Vec<_>>())?,
    )?;
    write_vector(
        p("rhs.tsv"),
        &DenseVector((0..3000).map(|k| (k as f64).cos()).collect()),
    )?;
    let sketch = repeated_halving(
        &a,
        &SketchConfig {
            c: END_TO_END_C,
            ..SketchConfig::default()
        },
    )?;
    write_sample(p("s.tsv"), &sketch.sample)?;

    let cases: Vec<(&str, Vec<String>, Option<String>)> = vec![
        (
            "scores",
            vec!["scores".into(), p("a.mtx"), "-o".into(), p("OUT")],
            Some(p("OUT")),
        ),
        (
            "scores --wrt",
            vec![
                "scores".into(),
                p("a.mtx"),
                "--wrt".into(),
                p("b.mtx"),
                "-o".into(),
                p("OUT"),
            ],
            Some(p("OUT")),
        ),
        (
            "scores --fast",
            vec![
                "scores".into(),
                p("a.mtx"),
                "--fast".into(),
                "-o".into(),
                p("OUT"),
            ],
            Some(p("OUT")),
        ),
        ("sketch halving", sketch_args(&p, "halving", &[]), Some(p("OUT"))),
        (
            "sketch refinement",
            sketch_args(&p, "refinement", &[]),
            Some(p("OUT")),
        ),
        (
            "sketch generic",
            sketch_args(&p, "generic", &["--preset", "sqrt-balanced"]),
            Some(p("OUT")),
        ),
        (
            "sketch input-sparsity",
            sketch_args(&p, "input-sparsity", &["--theta", "0.5"]),
            Some(p("OUT")),
        ),
        (
            "reweight",
            vec![
                "reweight".into(),
                p("a.mtx"),
                "--alpha".into(),
                "0.02".into(),
                "-o".into(),
                p("OUT"),
            ],
            Some(p("OUT")),
        ),
        (
            "verify",
            vec![
                "verify".into(),
                p("a.mtx"),
                p("s.tsv"),
                "--lambda".into(),
                "3".into(),
            ],
            None,
        ),
        (
            "solve",
            vec![
                "solve".into(),
                p("a.mtx"),
                p("rhs.tsv"),
                "--c".into(),
                "1".into(),
                "-o".into(),
                p("OUT"),
            ],
            Some(p("OUT")),
        ),
        (
            "bench",
            vec!["bench".into(), "-o".into(), p("OUT")],
            Some(p("OUT")),
        ),
    ];
    let mut failures = Vec::new();
    for (name, args, file) in &cases {
        let argv: Vec<&str> = args.iter().map(String::as_str).collect();
        let mut runs = Vec::new();
        for _ in 0..2 {
            let (code, report) = run_cli(&argv)?;
            let body = match file {
                Some(f) => strip_timing_column(name, &std::fs::read_to_string(f)?),
                None => String::new(),
            };
            runs.push((code, report, body));
        }
        if runs[0] != runs[1] {
            failures.push(name.to_string());
        } else if runs[0].0 != 0 {
            failures.push(format!("{name} exited {}", runs[0].0));
        }
    }
    verdict(
        failures.is_empty(),
        if failures.is_empty() {
            format!("{} invocations reproduced byte for byte", cases.len())
        } else {
            format!("differed or failed: {}", failures.join(", "))
        },
    )
}

fn sketch_args(p: &dyn Fn(&str) -> String, method: &str, extra: &[&str]) -> Vec<String> {
    let mut v = vec![
        "sketch".into(),
        p("a.mtx"),
        "--method".into(),
        method.into(),
        "--c".into(),
        "1".into(),
    ];
    v.extend(extra.iter().map(|s| s.to_string()));
    v.extend(["-o".into(), p("OUT")]);
    v
}

/// The bench table's last column is wall time; everything else must match.
fn strip_timing_column(name: &str, body: &str) -> String {
    if name != "bench" {
        return body.to_string();
    }
    body.lines()
        .map(|l| l.rsplit_once('\t').map_or(l, |(head, _)| head))
        .collect::<Vec<_>>()
        .join("\n")
}

fn main() {
    let criteria: [(&str, Criterion); 12] = [
        ("overestimation invariant", c1_overestimation),
        ("expectation bound", c2_expectation),
        ("Sherman-Morrison identity", c3_sherman_morrison),
        ("rank-one update exactness", c4_rank_one),
        ("sampling with exact scores", c5_sampling_lemma),
        ("reweighting certificate", c6_reweighting),
        ("refinement halving", c7_refinement_halving),
        ("end-to-end sketchers", c8_end_to_end),
        ("isolated-direction safety", c9_isolated_direction),
        ("comparison inequality", c10_comparison),
        ("preconditioning", c11_preconditioning),
        ("CLI determinism", c12_determinism),
    ];
    let suite_start = Instant::now();
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (pass, detail) = match check() {
            Ok(v) => (v.pass, v.detail),
            Err(e) => (false, format!("error: {e:#}")),
        };
        failed += usize::from(!pass);
        println!(
            "criterion {:>2} {:<28} {} [{:.1}s] {}",
            k + 1,
            name,
            if pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            detail
        );
    }
    println!(
        "acceptance: {}/12 passed in {:.1}s",
        12 - failed,
        suite_start.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
