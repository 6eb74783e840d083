use std::cell::Cell;

use serde::Serialize;

use super::{constant_theta, estimate_and_sample, lambda_for, SketchResult, Trace};
use crate::config::{log_d, SketchConfig};
use crate::error::{Error, Result};
use crate::instrument::measure;
use crate::matrix::{materialize_sample, SparseRowMatrix, WeightedRowSample};
use crate::rng::{derive_seed, tag};
use crate::sampling::bernoulli_subset;

/// How many rows a step of the generic scheme asks for, given the
/// current row count `n̄` and column count `d`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum SizeRule {
    /// `n̄ / 2`
    Half,
    /// `d ln d`
    DLogD,
    /// `√(n̄ d ln d)`
    SqrtNdLogD,
    Fixed(usize),
}

impl SizeRule {
    pub fn resolve(self, n_bar: usize, d: usize) -> usize {
        let dl = d as f64 * log_d(d);
        match self {
            SizeRule::Half => n_bar.div_ceil(2),
            SizeRule::DLogD => dl.ceil() as usize,
            SizeRule::SqrtNdLogD => (n_bar as f64 * dl).sqrt().ceil() as usize,
            SizeRule::Fixed(k) => k,
        }
    }
}

/// Which matrix the third step samples from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SampleWrt {
    OriginalA,
    CurrentAhat,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Preset {
    HeadRecursive,
    TailRecursive,
    Refinement,
    SqrtBalanced,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "head-recursive" => Ok(Preset::HeadRecursive),
            "tail-recursive" => Ok(Preset::TailRecursive),
            "refinement" => Ok(Preset::Refinement),
            "sqrt-balanced" => Ok(Preset::SqrtBalanced),
            other => Err(Error::InvalidArgument(format!("unknown preset `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GenericSchemeParams {
    pub n1: SizeRule,
    pub n3: SizeRule,
    pub sample_wrt: SampleWrt,
    pub per_level_epsilon: f64,
}

impl GenericSchemeParams {
    /// Named parameter choices; `n` is the row count of the input.
    pub fn preset(p: Preset, n: usize, cfg: &SketchConfig) -> Self {
        match p {
            Preset::HeadRecursive => GenericSchemeParams {
                n1: SizeRule::Half,
                n3: SizeRule::DLogD,
                sample_wrt: SampleWrt::CurrentAhat,
                per_level_epsilon: cfg.epsilon,
            },
            Preset::TailRecursive => GenericSchemeParams {
                n1: SizeRule::DLogD,
                n3: SizeRule::Half,
                sample_wrt: SampleWrt::CurrentAhat,
                per_level_epsilon: (1.0 / (n.max(3) as f64).ln()).min(cfg.epsilon),
            },
            Preset::Refinement => GenericSchemeParams {
                n1: SizeRule::DLogD,
                n3: SizeRule::DLogD,
                sample_wrt: SampleWrt::OriginalA,
                per_level_epsilon: cfg.epsilon,
            },
            Preset::SqrtBalanced => GenericSchemeParams {
                n1: SizeRule::SqrtNdLogD,
                n3: SizeRule::SqrtNdLogD,
                sample_wrt: SampleWrt::OriginalA,
                per_level_epsilon: cfg.epsilon,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.per_level_epsilon > 0.0 && self.per_level_epsilon < 1.0) {
            return Err(Error::InvalidArgument(
                "per_level_epsilon must lie in (0, 1)".into(),
            ));
        }
        for r in [self.n1, self.n3] {
            if r == SizeRule::Fixed(0) {
                return Err(Error::InvalidArgument("fixed sizes must be at least 1".into()));
            }
        }
        Ok(())
    }
}

struct Ctx<'a> {
    a: &'a SparseRowMatrix,
    params: GenericSchemeParams,
    cfg: &'a SketchConfig,
    base_rows: usize,
    depth_cap: usize,
    deepest: Cell<usize>,
    history: std::cell::RefCell<Vec<f64>>,
    stage_rows: std::cell::RefCell<Vec<usize>>,
}

/// `ceil(log₂(n/d)) + 8`.
pub(crate) fn depth_cap(n: usize, d: usize) -> usize {
    let ratio = n as f64 / d.max(1) as f64;
    ratio.log2().max(0.0).ceil() as usize + 8
}

impl Ctx<'_> {
    /// Approximates the rows of `A` selected by `current`; returns a sample
    /// into `A` and its approximation factor relative to `current`.
    fn run(&self, current: WeightedRowSample, seed: u64, depth: usize) -> Result<(WeightedRowSample, f64)> {
        let n_bar = current.len();
        if n_bar <= self.base_rows {
            return Ok((current, 1.0));
        }
        if depth > self.depth_cap {
            return Err(Error::Internal(format!(
                "recursion depth {depth} exceeds cap {}",
                self.depth_cap
            )));
        }
        self.deepest.set(self.deepest.get().max(depth + 1));
        let d = self.a.n_cols();
        let eps = self.params.per_level_epsilon;

        let n1 = self.params.n1.resolve(n_bar, d);
        let rate = (n1 as f64 / n_bar as f64).min(1.0);
        let a1 = current.compose(&bernoulli_subset(n_bar, rate, derive_seed(seed, tag::BERNOULLI)))?;
        let a2 = if a1.len() <= self.base_rows || a1.len() >= n_bar {
            a1
        } else {
            self.run(a1, derive_seed(seed, tag::LEVEL), depth + 1)?.0
        };
        let b = materialize_sample(self.a, &a2)?;

        let target = match self.params.sample_wrt {
            SampleWrt::OriginalA => WeightedRowSample::all_rows(self.a.n_rows()),
            SampleWrt::CurrentAhat => current,
        };
        let target_mat = materialize_sample(self.a, &target)?;
        let step_cfg = self.cfg.with_seed(derive_seed(seed, tag::SAMPLE));
        let (s, total) = estimate_and_sample(&target_mat, &b, constant_theta(d), eps, &step_cfg)?;
        let a3 = target.compose(&s)?;
        self.history.borrow_mut().push(total);
        self.stage_rows.borrow_mut().push(a3.len());
        let lambda3 = lambda_for(eps);

        let n3 = self.params.n3.resolve(n_bar, d);
        if n3 > self.base_rows && a3.len() > self.base_rows && a3.len() < n_bar {
            let (a4, lambda4) = self.run(a3, derive_seed(seed, tag::STAGE), depth + 1)?;
            let lambda = match self.params.sample_wrt {
                // the recursion resamples A itself, so no error accumulates
                SampleWrt::OriginalA => lambda4,
                SampleWrt::CurrentAhat => lambda3 * lambda4,
            };
            return Ok((a4, lambda));
        }
        Ok((a3, lambda3))
    }
}

/// The generic uniform-then-leverage scheme: uniformly sample `n1` rows,
/// approximate them recursively, use that to sample `A` or the current
/// matrix, and recurse on the result when it is still large.
pub fn generic_scheme(
    a: &SparseRowMatrix,
    params: GenericSchemeParams,
    cfg: &SketchConfig,
) -> Result<SketchResult> {
    generic_named(a, params, cfg, "generic")
}

fn generic_named(
    a: &SparseRowMatrix,
    params: GenericSchemeParams,
    cfg: &SketchConfig,
    method: &str,
) -> Result<SketchResult> {
    cfg.validate()?;
    params.validate()?;
    let (n, d) = (a.n_rows(), a.n_cols());
    let ctx = Ctx {
        a,
        params,
        cfg,
        base_rows: cfg.base_rows(d),
        depth_cap: depth_cap(n, d),
        deepest: Cell::new(0),
        history: Default::default(),
        stage_rows: Default::default(),
    };
    let (out, counts) = measure(|| ctx.run(WeightedRowSample::all_rows(n), cfg.seed, 0));
    let (sample, lambda) = out?;
    let trace = Trace {
        history: ctx.history.take(),
        stage_rows: ctx.stage_rows.take(),
        levels: ctx.deepest.get(),
    };
    Ok(SketchResult::assemble(method, sample, counts, cfg, lambda, trace))
}

/// Repeated halving: recursively approximate a uniform half of the rows,
/// then sample every row by its leverage against that approximation.
pub fn repeated_halving(a: &SparseRowMatrix, cfg: &SketchConfig) -> Result<SketchResult> {
    let params = GenericSchemeParams::preset(Preset::HeadRecursive, a.n_rows(), cfg);
    generic_named(a, params, cfg, "halving")
}
