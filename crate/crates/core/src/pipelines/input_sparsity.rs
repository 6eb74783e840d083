use super::generic::depth_cap;
use super::{constant_theta, estimate_and_sample, lambda_for, SketchResult, Trace};
use crate::config::SketchConfig;
use crate::error::{Error, Result};
use crate::instrument::measure;
use crate::matrix::{materialize_sample, SparseRowMatrix, WeightedRowSample};
use crate::rng::{derive_seed, tag};
use crate::sampling::bernoulli_subset;

// accuracy of each step of the constant-factor stage
const COARSE_EPSILON: f64 = 0.5;

struct Coarse<'a> {
    a: &'a SparseRowMatrix,
    theta: f64,
    cfg: &'a SketchConfig,
    base_rows: usize,
    depth_cap: usize,
    trace: std::cell::RefCell<Trace>,
}

impl Coarse<'_> {
    /// Constant-factor approximation of the rows selected by `current`.
    ///
    /// Each level estimates with `d^θ` distortion, samples down to
    /// `O(d^{1+θ} log d)` rows, re-estimates those rows against the same
    /// recursive sketch with constant distortion, and samples again.
    fn run(&self, current: WeightedRowSample, seed: u64, depth: usize) -> Result<WeightedRowSample> {
        let n_bar = current.len();
        if n_bar <= self.base_rows {
            return Ok(current);
        }
        if depth > self.depth_cap {
            return Err(Error::Internal(format!("recursion depth {depth} exceeds cap")));
        }
        let d = self.a.n_cols();
        let half = current.compose(&bernoulli_subset(n_bar, 0.5, derive_seed(seed, tag::BERNOULLI)))?;
        let inner = self.run(half, derive_seed(seed, tag::LEVEL), depth + 1)?;
        let b = materialize_sample(self.a, &inner)?;

        let ahat = materialize_sample(self.a, &current)?;
        let c1 = self.cfg.with_seed(derive_seed(seed, tag::SAMPLE));
        let (t, sum1) = estimate_and_sample(&ahat, &b, self.theta, COARSE_EPSILON, &c1)?;
        let t_mat = materialize_sample(&ahat, &t)?;
        // TᵀT ⪰ ÂᵀÂ/λ, so B/√λ stays below T and its scores still overestimate
        let lambda = lambda_for(COARSE_EPSILON);
        let b_low = b.scale_rows(&vec![lambda.sqrt().recip(); b.n_rows()])?;
        let c2 = self.cfg.with_seed(derive_seed(seed, tag::STAGE));
        let (t2, sum2) = estimate_and_sample(&t_mat, &b_low, constant_theta(d), COARSE_EPSILON, &c2)?;

        let mut tr = self.trace.borrow_mut();
        tr.history.extend([sum1, sum2]);
        tr.stage_rows.extend([t.len(), t2.len()]);
        tr.levels = tr.levels.max(depth + 1);
        current.compose(&t)?.compose(&t2)
    }
}

/// Two-stage sketch whose heavy passes over `A` use `θ`-distortion
/// estimates.
///
/// Stage one builds a constant-factor sketch `Ã`. Stage two samples `A`
/// at accuracy `ε/2` with `d^θ`-distorted scores against `Ã`, giving
/// `O(d^{1+θ} log d ε⁻²)` rows, then resamples those rows at accuracy
/// `ε/2` with constant-distortion scores against `Ã`. The two `ε/2` steps
/// compose to `((1+ε/2)/(1−ε/2))² ≤ (1+ε)/(1−ε)`.
pub fn input_sparsity_sketch(
    a: &SparseRowMatrix,
    theta: f64,
    epsilon: f64,
    cfg: &SketchConfig,
) -> Result<SketchResult> {
    cfg.validate()?;
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::InvalidArgument(format!("theta = {theta} outside (0, 1]")));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "epsilon = {epsilon} outside (0, 1)"
        )));
    }
    let (n, d) = (a.n_rows(), a.n_cols());
    let coarse = Coarse {
        a,
        theta,
        cfg,
        base_rows: cfg.base_rows(d),
        depth_cap: depth_cap(n, d),
        trace: Default::default(),
    };
    let half_eps = epsilon / 2.0;
    let (out, counts) = measure(|| -> Result<_> {
        let all = WeightedRowSample::all_rows(n);
        let rough = coarse.run(all, derive_seed(cfg.seed, tag::LEVEL), 0)?;
        if rough.len() == n {
            // nothing was sampled away; A is its own sketch
            return Ok((WeightedRowSample::all_rows(n), 1.0));
        }
        let b = materialize_sample(a, &rough)?;

        let c1 = cfg.with_seed(derive_seed(cfg.seed, tag::SAMPLE));
        let (mid, sum1) = estimate_and_sample(a, &b, theta, half_eps, &c1)?;
        let mid_mat = materialize_sample(a, &mid)?;
        let lambda_half = lambda_for(half_eps);
        let b_low = b.scale_rows(&vec![lambda_half.sqrt().recip(); b.n_rows()])?;
        let c2 = cfg.with_seed(derive_seed(cfg.seed, tag::STAGE));
        let (fin, sum2) = estimate_and_sample(&mid_mat, &b_low, constant_theta(d), half_eps, &c2)?;

        let mut tr = coarse.trace.borrow_mut();
        tr.history.extend([sum1, sum2]);
        tr.stage_rows.extend([rough.len(), mid.len()]);
        Ok((mid.compose(&fin)?, lambda_half * lambda_half))
    });
    let (sample, lambda) = out?;
    Ok(SketchResult::assemble(
        "input-sparsity",
        sample,
        counts,
        cfg,
        lambda,
        coarse.trace.take(),
    ))
}
