//! Randomized row samplers and the uniform-sampling leverage estimators.

use crate::config::{log_d, SketchConfig, DEFAULT_RANK_TOL};
use crate::error::{Error, Result};
use crate::leverage::{factor_gram, scores_against, Score, ScoreVector};
use crate::matrix::{materialize_sample, SparseRowMatrix, WeightedRowSample};
use crate::rng::{counter_uniform, derive_seed, stream, tag};

/// `p_i = min{1, α · u_i · c · ln(max(d, 2))}`.
pub fn sample_probabilities(u: &[f64], d: usize, alpha: f64, c: f64) -> Vec<f64> {
    let scale = alpha * c * log_d(d);
    u.iter().map(|&ui| (scale * ui).min(1.0)).collect()
}

fn finite_nonnegative(a: &SparseRowMatrix, u: &ScoreVector) -> Result<Vec<f64>> {
    if u.len() != a.n_rows() {
        return Err(Error::DimensionMismatch(format!(
            "{} scores for {} rows",
            u.len(),
            a.n_rows()
        )));
    }
    let vals = u.to_finite().ok_or_else(|| {
        Error::Contract("sampling scores must be finite; cap infinite entries first".into())
    })?;
    if let Some(i) = vals.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::Contract(format!("score {i} is negative or not finite")));
    }
    Ok(vals)
}

/// Keeps row `i` independently with probability `p_i`, at weight `1/√p_i`.
pub fn sample(
    a: &SparseRowMatrix,
    u: &ScoreVector,
    alpha: f64,
    cfg: &SketchConfig,
) -> Result<WeightedRowSample> {
    scaled_sample(a, u, alpha, 1.0, cfg)
}

/// [`sample`] with every weight multiplied by `scale`.
pub fn scaled_sample(
    a: &SparseRowMatrix,
    u: &ScoreVector,
    alpha: f64,
    scale: f64,
    cfg: &SketchConfig,
) -> Result<WeightedRowSample> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "sampling rate {alpha} must be positive"
        )));
    }
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::InvalidArgument(format!("scale {scale} must be positive")));
    }
    let u = finite_nonnegative(a, u)?;
    let p = sample_probabilities(&u, a.n_cols(), alpha, cfg.c);
    let seed = derive_seed(cfg.seed, tag::SAMPLE);
    let entries = p
        .iter()
        .enumerate()
        .filter(|&(i, &pi)| pi > 0.0 && counter_uniform(seed, i as u64) < pi)
        .map(|(i, &pi)| (i, scale / pi.sqrt()))
        .collect();
    WeightedRowSample::new(a.n_rows(), entries)
}

/// Uniformly random `m`-subset of `0..n` at weight 1, in ascending order.
pub fn uniform_subset(n: usize, m: usize, seed: u64) -> Result<WeightedRowSample> {
    if m > n {
        return Err(Error::InvalidArgument(format!("cannot choose {m} of {n} rows")));
    }
    let mut rng = stream(derive_seed(seed, tag::UNIFORM_SUBSET));
    let mut idx = rand::seq::index::sample(&mut rng, n, m).into_vec();
    idx.sort_unstable();
    WeightedRowSample::new(n, idx.into_iter().map(|i| (i, 1.0)).collect())
}

/// Independent Bernoulli(`rate`) row selection at weight 1.
pub fn bernoulli_subset(n: usize, rate: f64, seed: u64) -> WeightedRowSample {
    let s = derive_seed(seed, tag::BERNOULLI);
    let entries = (0..n)
        .filter(|&i| counter_uniform(s, i as u64) < rate)
        .map(|i| (i, 1.0))
        .collect();
    WeightedRowSample::new(n, entries).expect("indices are unique and in range")
}

/// Uniform `m`-subset estimator: `τ^{SA}_i` on the subset, `1/(1 + 1/τ^{SA}_i)` off it.
pub fn uniform_leverage_estimates(a: &SparseRowMatrix, m: usize, cfg: &SketchConfig) -> Result<ScoreVector> {
    uniform_leverage_estimates_with_subset(a, m, cfg).map(|(s, _)| s)
}

/// As [`uniform_leverage_estimates`], also returning the subset drawn.
pub fn uniform_leverage_estimates_with_subset(
    a: &SparseRowMatrix,
    m: usize,
    cfg: &SketchConfig,
) -> Result<(ScoreVector, WeightedRowSample)> {
    let n = a.n_rows();
    if m == 0 || m > n {
        return Err(Error::InvalidArgument(format!("m = {m} outside 1..={n}")));
    }
    let s = uniform_subset(n, m, cfg.seed)?;
    let sa = materialize_sample(a, &s)?;
    let f = factor_gram(&sa, cfg.rank_tol);
    let inside = s.mask();
    let raw = scores_against(a, &f, cfg.kernel_tol);
    let est = raw
        .values()
        .iter()
        .zip(&inside)
        .map(|(&t, &ins)| match (t, ins) {
            (Score::Infinite, _) => 1.0,
            (Score::Finite(t), true) => t.min(1.0),
            (Score::Finite(t), false) => t / (1.0 + t),
        })
        .collect();
    Ok((ScoreVector::from_finite(est), s))
}

/// Returns `(1/(1 + 1/τ^{SA}_i), τ^{S∪{i} A}_i)`: the closed form and the
/// direct leverage of row `i` after adding it to the unit-weight sample.
pub fn sherman_morrison_check(a: &SparseRowMatrix, s: &WeightedRowSample, i: usize) -> Result<(f64, f64)> {
    if i >= a.n_rows() {
        return Err(Error::IndexOutOfRange {
            index: i,
            len: a.n_rows(),
        });
    }
    if s.contains(i) {
        return Err(Error::Contract(format!("row {i} already in the sample")));
    }
    if s.entries().iter().any(|&(_, w)| w != 1.0) {
        return Err(Error::Contract("sample weights must all be 1".into()));
    }
    let row = a.row(i);
    let sa = materialize_sample(a, s)?;
    let f = factor_gram(&sa, DEFAULT_RANK_TOL);
    let norm_sq = row.norm_sq();
    let closed = if norm_sq == 0.0 {
        0.0
    } else if f.kernel_component_sq(row) > 1e-16 * norm_sq {
        1.0
    } else {
        let t = f.quad_row(row);
        1.0 / (1.0 + 1.0 / t)
    };
    let mut entries = s.entries().to_vec();
    entries.push((i, 1.0));
    let with_i = materialize_sample(a, &WeightedRowSample::new(a.n_rows(), entries)?)?;
    let g = factor_gram(&with_i, DEFAULT_RANK_TOL);
    Ok((closed, g.quad_row(row)))
}

/// One undersampling refinement step: `u_new_i = min{τ^{S′A}_i, u_i}` with
/// `S′ = √α·√(3/4)·Sample(u, 9α)`.
pub fn undersample_refine(
    a: &SparseRowMatrix,
    u: &ScoreVector,
    alpha: f64,
    cfg: &SketchConfig,
) -> Result<ScoreVector> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidArgument(format!("alpha = {alpha} outside (0, 1]")));
    }
    let uf = finite_nonnegative(a, u)?;
    let s = scaled_sample(a, u, 9.0 * alpha, (0.75 * alpha).sqrt(), cfg)?;
    let sa = materialize_sample(a, &s)?;
    let f = factor_gram(&sa, cfg.rank_tol);
    let t = scores_against(a, &f, cfg.kernel_tol);
    Ok(ScoreVector::from_finite(
        t.values()
            .iter()
            .zip(&uf)
            .map(|(&ti, &ui)| ti.finite().map_or(ui, |x| x.min(ui)))
            .collect(),
    ))
}

/// Bernoulli(`m/n`) sample without reweighting; `τ̃_i = min{1, τ^{SA}_i}`.
pub fn uniform_no_reweight_estimates(
    a: &SparseRowMatrix,
    m: usize,
    cfg: &SketchConfig,
) -> Result<ScoreVector> {
    let n = a.n_rows();
    if m == 0 || m > n {
        return Err(Error::InvalidArgument(format!("m = {m} outside 1..={n}")));
    }
    let s = bernoulli_subset(n, m as f64 / n as f64, cfg.seed);
    let sa = materialize_sample(a, &s)?;
    let f = factor_gram(&sa, cfg.rank_tol);
    Ok(ScoreVector::from_finite(
        scores_against(a, &f, cfg.kernel_tol)
            .finite_or(1.0)
            .into_iter()
            .map(|t| t.min(1.0))
            .collect(),
    ))
}
