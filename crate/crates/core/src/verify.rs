//! Dense certifiers: spectral approximation checks and a Monte Carlo harness.

use rayon::prelude::*;
use serde::Serialize;

use crate::config::DEFAULT_RANK_TOL;
use crate::error::{Error, Result};
use crate::leverage::{factor_gram, triangular_factor};
use crate::matrix::SparseRowMatrix;
use crate::rng::{derive_seed, tag};

pub use crate::instrument::{measure, solve_counter, OpCounts};

pub const DEFAULT_CHECK_TOL: f64 = 1e-6;

/// Extreme eigenvalues of the pencil `(ÃᵀÃ, AᵀA)` on the row space of `A`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpectralReport {
    pub lambda_low: f64,
    pub lambda_high: f64,
    pub lambda: f64,
    pub tol: f64,
    pub rank_a: usize,
    pub rank_atilde: usize,
    pub rank_match: bool,
    /// `‖Ã K‖_F / ‖Ã‖_F` for an orthonormal basis `K` of `ker(A)`.
    pub kernel_leak: f64,
    pub passes: bool,
}

/// Checks `(1/λ)‖Ax‖² ≤ ‖Ãx‖² ≤ ‖Ax‖²` for all `x`, within `tol` on the
/// eigenvalue bounds.
pub fn spectral_check(
    a: &SparseRowMatrix,
    atilde: &SparseRowMatrix,
    lambda: f64,
    tol: f64,
) -> Result<SpectralReport> {
    if a.n_cols() != atilde.n_cols() {
        return Err(Error::DimensionMismatch(format!(
            "A has {} columns, Ã has {}",
            a.n_cols(),
            atilde.n_cols()
        )));
    }
    if !(lambda >= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "lambda = {lambda} must be at least 1"
        )));
    }
    let fa = factor_gram(a, DEFAULT_RANK_TOL);
    let ft = factor_gram(atilde, DEFAULT_RANK_TOL);
    let rt = triangular_factor(atilde);
    let c = &rt * fa.whitener();
    let (lambda_low, lambda_high) = if c.ncols() == 0 {
        (1.0, 1.0)
    } else {
        let sv = c.singular_values();
        (sv.min().powi(2), sv.max().powi(2))
    };
    let rt_norm = rt.norm();
    let kernel_leak = if fa.kernel_basis().ncols() == 0 || rt_norm == 0.0 {
        0.0
    } else {
        (&rt * fa.kernel_basis()).norm() / rt_norm
    };
    let rank_match = fa.rank() == ft.rank();
    let passes =
        lambda_high <= 1.0 + tol && lambda_low >= 1.0 / lambda - tol && rank_match && kernel_leak <= 1e-8;
    Ok(SpectralReport {
        lambda_low,
        lambda_high,
        lambda,
        tol,
        rank_a: fa.rank(),
        rank_atilde: ft.rank(),
        rank_match,
        kernel_leak,
        passes,
    })
}

/// Outcome of one seeded trial.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Trial {
    pub value: f64,
    pub pass: bool,
}

impl Trial {
    pub fn new(value: f64, pass: bool) -> Self {
        Trial { value, pass }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MonteCarloReport {
    pub name: String,
    pub master_seed: u64,
    pub trials: usize,
    pub mean: f64,
    pub stderr: f64,
    pub pass_fraction: f64,
    pub min: f64,
    pub max: f64,
}

/// Seed of trial `t` under `master_seed`.
pub fn trial_seed(master_seed: u64, t: usize) -> u64 {
    derive_seed(derive_seed(master_seed, tag::TRIAL), t as u64)
}

/// Runs `experiment` on `trials` derived seeds in parallel.
///
/// Results depend only on `master_seed` and `trials`, not on scheduling.
pub fn monte_carlo<F>(name: &str, master_seed: u64, trials: usize, experiment: F) -> Result<MonteCarloReport>
where
    F: Fn(u64) -> Result<Trial> + Sync,
{
    if trials < 30 {
        return Err(Error::InvalidArgument(format!(
            "monte carlo needs at least 30 trials, got {trials}"
        )));
    }
    let results: Vec<Trial> = (0..trials)
        .into_par_iter()
        .map(|t| experiment(trial_seed(master_seed, t)))
        .collect::<Result<_>>()?;
    let n = trials as f64;
    let mean = results.iter().map(|t| t.value).sum::<f64>() / n;
    let var = results.iter().map(|t| (t.value - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let passes = results.iter().filter(|t| t.pass).count();
    Ok(MonteCarloReport {
        name: name.to_string(),
        master_seed,
        trials,
        mean,
        stderr: (var / n).sqrt(),
        pass_fraction: passes as f64 / n,
        min: results.iter().map(|t| t.value).fold(f64::INFINITY, f64::min),
        max: results.iter().map(|t| t.value).fold(f64::NEG_INFINITY, f64::max),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::rng::counter_uniform;

    #[test]
    fn self_check_passes() {
        let a = corpus::gaussian(40, 5, 1);
        let r = spectral_check(&a, &a, 1.0 + 1e-6, DEFAULT_CHECK_TOL).unwrap();
        assert!((r.lambda_low - 1.0).abs() < 1e-10 && (r.lambda_high - 1.0).abs() < 1e-10);
        assert!(r.passes);
    }

    #[test]
    fn uniform_scaling() {
        let a = corpus::gaussian(40, 5, 2);
        let half = a.scale_rows(&vec![0.5f64.sqrt(); 40]).unwrap();
        let r = spectral_check(&a, &half, 2.0, DEFAULT_CHECK_TOL).unwrap();
        assert!((r.lambda_low - 0.5).abs() < 1e-10 && (r.lambda_high - 0.5).abs() < 1e-10);
        assert!(r.passes);
        assert!(!spectral_check(&a, &half, 1.9, DEFAULT_CHECK_TOL).unwrap().passes);
    }

    #[test]
    fn dropping_isolated_row_fails_rank() {
        let a = corpus::isolated_direction(50, 4, 9, 3);
        let keep: Vec<usize> = (0..50).filter(|&i| i != 9).collect();
        let r = spectral_check(&a, &a.select_rows(&keep).unwrap(), 1e6, DEFAULT_CHECK_TOL).unwrap();
        assert!(!r.rank_match && !r.passes);
    }

    #[test]
    fn rows_outside_row_space_fail() {
        let a = SparseRowMatrix::from_dense_rows(2, &[vec![1.0, 0.0]]).unwrap();
        let t = SparseRowMatrix::from_dense_rows(2, &[vec![0.5, 0.5]]).unwrap();
        let r = spectral_check(&a, &t, 100.0, DEFAULT_CHECK_TOL).unwrap();
        assert!(!r.passes);
    }

    #[test]
    fn permutation_invariance() {
        let a = corpus::gaussian(30, 4, 4);
        let sub: Vec<usize> = (0..30).step_by(2).collect();
        let t = a.select_scaled(&sub, &vec![1.2; sub.len()]).unwrap();
        let rev: Vec<usize> = (0..30).rev().collect();
        let r1 = spectral_check(&a, &t, 10.0, 1e-6).unwrap();
        let r2 = spectral_check(&a.select_rows(&rev).unwrap(), &t, 10.0, 1e-6).unwrap();
        assert!((r1.lambda_low - r2.lambda_low).abs() < 1e-10);
        assert!((r1.lambda_high - r2.lambda_high).abs() < 1e-10);
    }

    #[test]
    fn constant_statistic() {
        let r = monte_carlo("const", 1, 50, |_| Ok(Trial::new(1.0, true))).unwrap();
        assert_eq!((r.mean, r.stderr, r.pass_fraction), (1.0, 0.0, 1.0));
    }

    #[test]
    fn fair_coin() {
        let r = monte_carlo("coin", 42, 400, |s| {
            let heads = counter_uniform(s, 0) < 0.5;
            Ok(Trial::new(f64::from(u8::from(heads)), heads))
        })
        .unwrap();
        assert!((0.42..=0.58).contains(&r.pass_fraction));
        let again = monte_carlo("coin", 42, 400, |s| {
            let heads = counter_uniform(s, 0) < 0.5;
            Ok(Trial::new(f64::from(u8::from(heads)), heads))
        })
        .unwrap();
        assert_eq!(r, again);
    }

    #[test]
    fn too_few_trials_rejected() {
        assert!(monte_carlo("x", 1, 29, |_| Ok(Trial::new(0.0, true))).is_err());
    }
}
