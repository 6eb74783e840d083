use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;
use tempfile::TempDir;

use rowsketch::config::log_d;
use rowsketch::corpus;
use rowsketch::leverage::read_scores;
use rowsketch::matrix::{read_sample, read_vector, write_matrix_market, write_sample, write_vector};
use rowsketch::{DenseVector, SparseRowMatrix, WeightedRowSample};

struct Run {
    code: i32,
    report: Value,
}

fn rowsketch(args: &[&str]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_rowsketch"))
        .args(args)
        .output()
        .expect("binary runs");
    let report = serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not a JSON report ({e}): {}",
            String::from_utf8_lossy(&out.stdout)
        )
    });
    Run {
        code: out.status.code().unwrap(),
        report,
    }
}

struct Workdir(TempDir);

impl Workdir {
    fn new() -> Self {
        Workdir(tempfile::tempdir().unwrap())
    }

    fn path(&self, name: &str) -> PathBuf {
        self.0.path().join(name)
    }

    fn s(&self, name: &str) -> String {
        self.path(name).to_string_lossy().into_owned()
    }

    fn matrix(&self, name: &str, a: &SparseRowMatrix) -> String {
        write_matrix_market(self.path(name), a).unwrap();
        self.s(name)
    }
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap()
}

#[test]
fn identity_scores_are_one() {
    let w = Workdir::new();
    let a = w.matrix("i.mtx", &SparseRowMatrix::identity(7));
    let run = rowsketch(&["scores", &a, "-o", &w.s("s.tsv")]);
    assert_eq!(run.code, 0);
    let s = read_scores(w.path("s.tsv")).unwrap();
    assert_eq!(s.len(), 7);
    assert!(s.to_finite().unwrap().iter().all(|&t| (t - 1.0).abs() < 1e-12));
}

#[test]
fn scores_against_rank_deficient_matrix_print_inf() {
    let w = Workdir::new();
    let a = w.matrix("a.mtx", &corpus::gaussian(30, 4, 1));
    // B spans only the first two coordinates
    let b =
        SparseRowMatrix::from_dense_rows(4, &[vec![1.0, 0.0, 0.0, 0.0], vec![0.0, 2.0, 0.0, 0.0]]).unwrap();
    let b = w.matrix("b.mtx", &b);
    let run = rowsketch(&["scores", &a, "--wrt", &b, "-o", &w.s("s.tsv")]);
    assert_eq!(run.code, 0);
    let text = std::fs::read_to_string(w.path("s.tsv")).unwrap();
    assert!(text.lines().any(|l| l.ends_with("\tinf")));
    assert_eq!(run.report["infinite"], 30);
}

#[test]
fn fast_scores_bracket_exact_ones() {
    let w = Workdir::new();
    let (d, theta) = (8usize, 0.25);
    let a = w.matrix("a.mtx", &corpus::gaussian(500, d, 2));
    assert_eq!(rowsketch(&["scores", &a, "-o", &w.s("exact.tsv")]).code, 0);
    let run = rowsketch(&["scores", &a, "--fast", "--theta", "0.25", "-o", &w.s("fast.tsv")]);
    assert_eq!(run.code, 0);
    let exact = read_scores(w.path("exact.tsv")).unwrap().to_finite().unwrap();
    let fast = read_scores(w.path("fast.tsv")).unwrap().to_finite().unwrap();
    let upper = (d as f64).powf(2.0 * theta);
    for (f, e) in fast.iter().zip(&exact) {
        let ratio = f / e;
        assert!((1.0 - 1e-6..=upper).contains(&ratio), "ratio {ratio}");
    }
}

#[test]
fn halving_on_stacked_identity_respects_row_bound() {
    let w = Workdir::new();
    let d = 8;
    let a = w.matrix("a.mtx", &corpus::stacked_identity(256, d));
    let run = rowsketch(&["sketch", &a, "--method", "halving", "-o", &w.s("s.tsv")]);
    assert_eq!(run.code, 0);
    let bound = 40.0 * d as f64 * log_d(d) * 4.0;
    assert!(run.report["rows_kept"].as_f64().unwrap() <= bound);
    let s = read_sample(w.path("s.tsv")).unwrap();
    assert_eq!(s.len() as u64, run.report["rows_kept"].as_u64().unwrap());
    assert_eq!(s.parent_rows(), 256 * d);
}

#[test]
fn sketch_is_reproducible_and_seed_sensitive() {
    let w = Workdir::new();
    let a = w.matrix("a.mtx", &corpus::gaussian(3000, 8, 3));
    for method in ["halving", "refinement", "generic", "input-sparsity"] {
        let mut files = Vec::new();
        for (k, seed) in ["5", "5", "6"].iter().enumerate() {
            let out = w.s(&format!("{method}-{k}.tsv"));
            let run = rowsketch(&[
                "sketch", &a, "--method", method, "--c", "1", "--seed", seed, "-o", &out,
            ]);
            assert_eq!(run.code, 0, "{method}: {}", run.report);
            files.push(read(Path::new(&out)));
        }
        assert_eq!(files[0], files[1], "{method}");
        assert_ne!(files[0], files[2], "{method}");
    }
}

#[test]
fn refinement_report_history_is_nonincreasing() {
    let w = Workdir::new();
    let a = w.matrix("a.mtx", &corpus::gaussian(4096, 8, 4));
    let run = rowsketch(&["sketch", &a, "--method", "refinement", "-o", &w.s("s.tsv")]);
    assert_eq!(run.code, 0);
    let h: Vec<f64> = run.report["sum_estimates_history"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert!(h.len() >= 2);
    assert!(h.windows(2).all(|p| p[1] <= p[0]), "{h:?}");
}

#[test]
fn verify_full_sample_passes_at_one() {
    let w = Workdir::new();
    let a = w.matrix("a.mtx", &corpus::gaussian(100, 5, 5));
    write_sample(w.path("s.tsv"), &WeightedRowSample::all_rows(100)).unwrap();
    let run = rowsketch(&["verify", &a, &w.s("s.tsv"), "--lambda", "1.000001"]);
    assert_eq!(run.code, 0);
    assert_eq!(run.report["passes"], true);
}

#[test]
fn verify_rejects_sample_missing_isolated_row() {
    let w = Workdir::new();
    let at = 17;
    let a = w.matrix("a.mtx", &corpus::isolated_direction(200, 6, at, 6));
    let entries = (0..200).filter(|&i| i != at).map(|i| (i, 1.0)).collect();
    write_sample(w.path("s.tsv"), &WeightedRowSample::new(200, entries).unwrap()).unwrap();
    let run = rowsketch(&["verify", &a, &w.s("s.tsv"), "--lambda", "100"]);
    assert_eq!(run.code, 1);
    assert_eq!(run.report["rank_match"], false);
    assert_eq!(run.report["status"], "fail");
}

#[test]
fn verify_reports_dimension_mismatch() {
    let w = Workdir::new();
    let a = w.matrix("a.mtx", &corpus::gaussian(50, 3, 7));
    write_sample(w.path("s.tsv"), &WeightedRowSample::all_rows(60)).unwrap();
    let run = rowsketch(&["verify", &a, &w.s("s.tsv"), "--lambda", "2"]);
    assert_eq!(run.code, 2);
    assert_eq!(run.report["status"], "error");
}

#[test]
fn halving_output_verifies_across_seeds() {
    let w = Workdir::new();
    let a = w.matrix("a.mtx", &corpus::gaussian(2048, 8, 8));
    let mut passed = 0;
    for seed in 0..100 {
        let out = w.s("s.tsv");
        let seed = seed.to_string();
        let sk = rowsketch(&["sketch", &a, "--c", "1", "--seed", &seed, "-o", &out]);
        assert_eq!(sk.code, 0);
        let lambda = sk.report["lambda"].as_f64().unwrap() + 1e-6;
        let run = rowsketch(&["verify", &a, &out, "--lambda", &lambda.to_string()]);
        passed += usize::from(run.code == 0);
    }
    assert!(passed >= 95, "{passed}/100");
}

#[test]
fn reweight_certificate_meets_targets() {
    let w = Workdir::new();
    let (n, d) = (128, 4);
    let a = w.matrix("a.mtx", &corpus::power_law(n, d, 9, 1.5));
    let alpha = 2.0 * d as f64 / n as f64;
    let run = rowsketch(&["reweight", &a, "--alpha", &alpha.to_string(), "-o", &w.s("w.tsv")]);
    assert_eq!(run.code, 0, "{}", run.report);
    assert!(run.report["max_violation"].as_f64().unwrap() <= 1e-6);
    assert!(run.report["reweighted_mass"].as_f64().unwrap() <= d as f64 + 1e-6);
    let text = std::fs::read_to_string(w.path("w.tsv")).unwrap();
    assert_eq!(text.lines().count(), n + 1);
}

#[test]
fn reweight_accepts_target_file() {
    let w = Workdir::new();
    let n = 40;
    let a = w.matrix("a.mtx", &corpus::gaussian(n, 3, 10));
    let targets: String = std::iter::once("row_index\tscore".to_string())
        .chain((0..n).map(|i| format!("{i}\t{}", if i < 5 { 0.01 } else { 1.0 })))
        .collect::<Vec<_>>()
        .join("\n");
    std::fs::write(w.path("u.tsv"), targets + "\n").unwrap();
    let run = rowsketch(&["reweight", &a, "--targets", &w.s("u.tsv"), "-o", &w.s("w.tsv")]);
    assert_eq!(run.code, 0, "{}", run.report);
    assert!(run.report["reweighted_count"].as_u64().unwrap() <= 5);
}

#[test]
fn reweight_requires_a_target() {
    let w = Workdir::new();
    let a = w.matrix("a.mtx", &corpus::gaussian(10, 2, 11));
    let run = rowsketch(&["reweight", &a, "-o", &w.s("w.tsv")]);
    assert_eq!(run.code, 2);
}

#[test]
fn solve_recovers_consistent_solution() {
    let w = Workdir::new();
    let a = corpus::gaussian(3000, 6, 12);
    let xs: Vec<f64> = (0..6).map(|j| 1.0 + j as f64).collect();
    let m = w.matrix("a.mtx", &a);
    write_vector(w.path("b.tsv"), &DenseVector(a.mul_vec(&xs))).unwrap();
    let run = rowsketch(&["solve", &m, &w.s("b.tsv"), "--tol", "1e-12", "-o", &w.s("x.tsv")]);
    assert_eq!(run.code, 0, "{}", run.report);
    let x = read_vector(w.path("x.tsv")).unwrap();
    let err: f64 =
        x.0.iter()
            .zip(&xs)
            .map(|(u, v)| (u - v).powi(2))
            .sum::<f64>()
            .sqrt();
    assert!(err <= 1e-6 * 91f64.sqrt());
    assert!(run.report["iterations"].as_u64().unwrap() <= 50);
}

#[test]
fn solve_reports_budget_exhaustion() {
    let w = Workdir::new();
    let a = w.matrix("a.mtx", &corpus::ill_conditioned(500, 8, 1e6, 13));
    write_vector(w.path("b.tsv"), &DenseVector(vec![1.0; 500])).unwrap();
    let run = rowsketch(&[
        "solve",
        &a,
        &w.s("b.tsv"),
        "--unpreconditioned",
        "--max-iters",
        "3",
        "-o",
        &w.s("x.tsv"),
    ]);
    assert_eq!(run.code, 3);
    assert_eq!(run.report["status"], "non-convergence");
    assert_eq!(run.report["iterations"], 3);
}

#[test]
fn bench_table_has_one_row_per_case_and_reproduces() {
    let w = Workdir::new();
    let first = rowsketch(&["bench", "--suite", "desk", "-o", &w.s("t1.tsv")]);
    let second = rowsketch(&["bench", "--suite", "desk", "-o", &w.s("t2.tsv")]);
    assert_eq!(first.code, 0);
    let cases = first.report["rows"].as_array().unwrap().len();
    let strip = |p: &str| -> Vec<String> {
        std::fs::read_to_string(w.path(p))
            .unwrap()
            .lines()
            .map(|l| l.rsplit_once('\t').unwrap().0.to_string())
            .collect()
    };
    let (t1, t2) = (strip("t1.tsv"), strip("t2.tsv"));
    assert_eq!(t1.len(), cases + 1);
    assert_eq!(t1, t2);
    assert_eq!(first.report["rows"], second.report["rows"]);
    assert!(first.report["rows"]
        .as_array()
        .unwrap()
        .iter()
        .all(|r| r["passes"] == true));
}

#[test]
fn malformed_input_and_flags_exit_two_with_report() {
    let w = Workdir::new();
    std::fs::write(
        w.path("bad.mtx"),
        "%%MatrixMarket matrix coordinate complex general\n1 1 1\n1 1 1 0\n",
    )
    .unwrap();
    let run = rowsketch(&["scores", &w.s("bad.mtx"), "-o", &w.s("s.tsv")]);
    assert_eq!(run.code, 2);
    assert_eq!(run.report["status"], "error");
    let run = rowsketch(&["sketch", &w.s("bad.mtx"), "--no-such-flag", "-o", &w.s("s.tsv")]);
    assert_eq!(run.code, 2);
}
