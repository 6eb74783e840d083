//! End-to-end sketchers built from the samplers and estimators.
//!
//! Every pipeline returns a [`SketchResult`] whose sample indexes rows of
//! the original input, with weights scaled so that the sketch is a
//! one-sided approximation: `ÃᵀÃ ⪯ AᵀA ⪯ λ ÃᵀÃ` at the reported `λ`.

mod generic;
mod input_sparsity;
mod refinement;
mod solve;

pub use generic::{generic_scheme, repeated_halving, GenericSchemeParams, Preset, SampleWrt, SizeRule};
pub use input_sparsity::input_sparsity_sketch;
pub use refinement::{refinement_estimates, refinement_sampling, RefinementEstimates};
pub use solve::{cgls, precondition_solve, preconditioner, SolveReport};

use serde::Serialize;

use crate::config::{log_d, SketchConfig};
use crate::error::{Error, Result};
use crate::fast::approx_generalized_leverage;
use crate::instrument::{measure, OpCounts};
use crate::leverage::ScoreVector;
use crate::matrix::{materialize_sample, SparseRowMatrix, WeightedRowSample};
use crate::sampling::sample;

/// Output of a sketching pipeline.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SketchResult {
    pub method: String,
    #[serde(skip)]
    pub sample: WeightedRowSample,
    pub rows_kept: usize,
    /// Sum of the capped estimates used at each round, in execution order.
    pub sum_estimates_history: Vec<f64>,
    /// Row counts of intermediate samples, in execution order.
    pub stage_rows: Vec<usize>,
    pub levels_or_iterations: usize,
    pub solve_count: u64,
    pub factorization_count: u64,
    pub seed: u64,
    /// Approximation factor the construction targets.
    pub lambda: f64,
}

impl SketchResult {
    pub(crate) fn assemble(
        method: &str,
        sample: WeightedRowSample,
        counts: OpCounts,
        cfg: &SketchConfig,
        lambda: f64,
        trace: Trace,
    ) -> Self {
        SketchResult {
            method: method.to_string(),
            rows_kept: sample.len(),
            sample,
            sum_estimates_history: trace.history,
            stage_rows: trace.stage_rows,
            levels_or_iterations: trace.levels,
            solve_count: counts.solves,
            factorization_count: counts.factorizations,
            seed: cfg.seed,
            lambda,
        }
    }

    pub fn materialize(&self, a: &SparseRowMatrix) -> Result<SparseRowMatrix> {
        materialize_sample(a, &self.sample)
    }
}

#[derive(Default)]
pub(crate) struct Trace {
    pub history: Vec<f64>,
    pub stage_rows: Vec<usize>,
    pub levels: usize,
}

/// `(1 + ε)/(1 − ε)`.
pub fn lambda_for(epsilon: f64) -> f64 {
    (1.0 + epsilon) / (1.0 - epsilon)
}

/// `θ = 1/ln d`, which makes the JL distortion `d^θ = e`.
pub fn constant_theta(d: usize) -> f64 {
    (1.0 / log_d(d)).min(1.0)
}

/// Infinite entries become 1 and everything is capped at 1.
pub(crate) fn capped(s: &ScoreVector) -> ScoreVector {
    ScoreVector::from_finite(s.finite_or(1.0).into_iter().map(|v| v.min(1.0)).collect())
}

/// Samples rows of `target` at rate `ε⁻²` using scores estimated against
/// `reference`, and scales weights by `1/√(1+ε)`. Returns the sample
/// (into `target`) and the sum of the capped estimates.
pub(crate) fn estimate_and_sample(
    target: &SparseRowMatrix,
    reference: &SparseRowMatrix,
    theta: f64,
    epsilon: f64,
    cfg: &SketchConfig,
) -> Result<(WeightedRowSample, f64)> {
    let est = capped(&approx_generalized_leverage(target, reference, theta, cfg)?);
    let total = est.sum_finite();
    let s = sample(target, &est, epsilon.powi(-2), cfg)?;
    Ok((s.scaled(1.0 / (1.0 + epsilon).sqrt())?, total))
}

/// Samples `A` at rate `ε⁻²` against a constant-factor sketch.
///
/// When `d ln d ε⁻² ≥ n` the whole of `A` is returned unweighted.
pub fn final_refinement(
    a: &SparseRowMatrix,
    sketch: &SketchResult,
    epsilon: f64,
    cfg: &SketchConfig,
) -> Result<SketchResult> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "epsilon = {epsilon} outside (0, 1]"
        )));
    }
    let (n, d) = (a.n_rows(), a.n_cols());
    if d as f64 * log_d(d) / (epsilon * epsilon) >= n as f64 {
        return Ok(SketchResult::assemble(
            "final-refinement",
            WeightedRowSample::all_rows(n),
            OpCounts::default(),
            cfg,
            1.0,
            Trace::default(),
        ));
    }
    let (out, counts) = measure(|| -> Result<_> {
        let b = sketch.materialize(a)?;
        estimate_and_sample(a, &b, constant_theta(d), epsilon, cfg)
    });
    let (s, total) = out?;
    let trace = Trace {
        history: vec![total],
        stage_rows: vec![sketch.rows_kept],
        levels: 1,
    };
    Ok(SketchResult::assemble(
        "final-refinement",
        s,
        counts,
        cfg,
        if epsilon < 1.0 {
            lambda_for(epsilon)
        } else {
            f64::INFINITY
        },
        trace,
    ))
}
