use super::{capped, lambda_for, SketchResult, Trace};
use crate::config::SketchConfig;
use crate::error::{Error, Result};
use crate::fast::approx_generalized_leverage;
use crate::instrument::measure;
use crate::leverage::ScoreVector;
use crate::matrix::{materialize_sample, SparseRowMatrix};
use crate::rng::{derive_seed, tag};
use crate::sampling::{sample, scaled_sample};

/// `4 · ceil(log₂(n/d)) + 16`.
fn iteration_cap(n: usize, d: usize) -> usize {
    4 * (n as f64 / d.max(1) as f64).log2().max(0.0).ceil() as usize + 16
}

/// Converged overestimates from the refinement loop.
#[derive(Clone, Debug, PartialEq)]
pub struct RefinementEstimates {
    pub estimates: ScoreVector,
    /// `‖τ̃‖₁` before the first iteration and after each one.
    pub history: Vec<f64>,
    /// Size of the undersample drawn at each iteration.
    pub stage_rows: Vec<usize>,
    pub iterations: usize,
}

/// Starting from `τ̃ = 1`, repeatedly undersamples `A` by `τ̃` and shrinks
/// `τ̃` to the estimated leverage against that sample, until
/// `‖τ̃‖₁ ≤ stop_multiplier · d`.
pub fn refinement_estimates(a: &SparseRowMatrix, cfg: &SketchConfig) -> Result<RefinementEstimates> {
    cfg.validate()?;
    let (n, d) = (a.n_rows(), a.n_cols());
    let stop = cfg.stop_multiplier * d as f64;
    let cap = iteration_cap(n, d);
    let mut tau = vec![1.0; n];
    let mut total = n as f64;
    let mut history = vec![total];
    let mut stage_rows = Vec::new();
    let mut iteration = 0;
    while total > stop {
        if iteration >= cap {
            return Err(Error::NonConvergence {
                iterations: iteration,
                detail: format!("estimate sums {history:?} still above {stop}"),
            });
        }
        let it_cfg = cfg.with_seed(derive_seed(
            derive_seed(cfg.seed, tag::ITERATION),
            iteration as u64,
        ));
        let alpha = (6.0 * d as f64 / total).min(1.0);
        let current = ScoreVector::from_finite(tau.clone());
        let s = scaled_sample(a, &current, 9.0 * alpha, (0.75 * alpha).sqrt(), &it_cfg)?;
        stage_rows.push(s.len());
        let sketch = materialize_sample(a, &s)?;
        let u = approx_generalized_leverage(a, &sketch, cfg.theta, &it_cfg)?;
        for (t, ui) in tau.iter_mut().zip(u.values()) {
            if let Some(v) = ui.finite() {
                *t = t.min(v);
            }
        }
        total = tau.iter().sum();
        history.push(total);
        iteration += 1;
    }
    Ok(RefinementEstimates {
        estimates: ScoreVector::from_finite(tau),
        history,
        stage_rows,
        iterations: iteration,
    })
}

/// Refinement sampling: [`refinement_estimates`] followed by sampling `A`
/// at rate `ε⁻²` against the converged estimates.
///
/// `sum_estimates_history` starts with `‖τ̃‖₁ = n` and gains one entry per
/// iteration.
pub fn refinement_sampling(a: &SparseRowMatrix, cfg: &SketchConfig) -> Result<SketchResult> {
    let (out, counts) = measure(|| -> Result<_> {
        let est = refinement_estimates(a, cfg)?;
        let final_cfg = cfg.with_seed(derive_seed(cfg.seed, tag::SAMPLE));
        let s = sample(a, &capped(&est.estimates), cfg.epsilon.powi(-2), &final_cfg)?
            .scaled(1.0 / (1.0 + cfg.epsilon).sqrt())?;
        Ok((s, est))
    });
    let (s, est) = out?;
    let trace = Trace {
        history: est.history,
        stage_rows: est.stage_rows,
        levels: est.iterations,
    };
    Ok(SketchResult::assemble(
        "refinement",
        s,
        counts,
        cfg,
        lambda_for(cfg.epsilon),
        trace,
    ))
}
