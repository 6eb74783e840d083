//! Approximate generalized leverage scores by Gaussian sketching.
//!
//! With `M = k^{-1/2} G B (BᵀB)⁺` for a `k × n_B` Gaussian `G`,
//! `‖M a‖² ≈ ‖B(BᵀB)⁺a‖² = τ^B(a)` up to a factor `d^θ` once
//! `k = ceil(c_jl / θ)`. Raw sketched norms are multiplied by `d^θ` so the
//! two-sided error becomes an overestimate. Rows with a component in
//! `ker(B)` are found with random kernel probes and reported infinite.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::config::SketchConfig;
use crate::error::{Error, Result};
use crate::instrument;
use crate::leverage::{factor_gram, PseudoinverseFactor, Score, ScoreVector};
use crate::matrix::SparseRowMatrix;
use crate::rng::{derive_seed, stream, tag};

/// Kernel-projected Gaussian vectors, one per probe.
#[derive(Clone, Debug)]
pub struct KernelProbe {
    pub probes: Vec<Vec<f64>>,
}

/// Seeded `k × n_rows` standard normal matrix, drawn row by row.
pub fn gaussian_sketch(k: usize, n_rows: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = stream(derive_seed(seed, tag::SKETCH));
    let mut g = DMatrix::zeros(k, n_rows);
    for s in 0..k {
        for t in 0..n_rows {
            g[(s, t)] = rng.sample(StandardNormal);
        }
    }
    g
}

/// `k^{-1/2} G B (BᵀB)⁺` for an explicit `G`, one solve per sketch row.
pub fn projector_sketch_from(
    b: &SparseRowMatrix,
    factor: &PseudoinverseFactor,
    g: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    if g.ncols() != b.n_rows() {
        return Err(Error::DimensionMismatch(format!(
            "sketch has {} columns, B has {} rows",
            g.ncols(),
            b.n_rows()
        )));
    }
    let k = g.nrows();
    let d = b.n_cols();
    let norm = 1.0 / (k.max(1) as f64).sqrt();
    let mut m = DMatrix::zeros(k, d);
    for s in 0..k {
        // row s of G B, i.e. Bᵀ g_s
        let gs: Vec<f64> = g.row(s).iter().copied().collect();
        let bg = b.tr_mul_vec(&gs);
        let row = factor.solve(&bg);
        for (j, v) in row.into_iter().enumerate() {
            m[(s, j)] = norm * v;
        }
    }
    Ok(m)
}

/// `M = k^{-1/2} G B (BᵀB)⁺` with `k = ceil(jl_constant / θ)`.
pub fn build_projector_sketch(b: &SparseRowMatrix, theta: f64, cfg: &SketchConfig) -> Result<DMatrix<f64>> {
    let factor = factor_gram(b, cfg.rank_tol);
    build_with_factor(b, &factor, theta, cfg)
}

fn build_with_factor(
    b: &SparseRowMatrix,
    factor: &PseudoinverseFactor,
    theta: f64,
    cfg: &SketchConfig,
) -> Result<DMatrix<f64>> {
    check_theta(theta)?;
    let g = gaussian_sketch(cfg.sketch_rows(theta), b.n_rows(), cfg.seed);
    projector_sketch_from(b, factor, &g)
}

fn check_theta(theta: f64) -> Result<()> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::InvalidArgument(format!("theta = {theta} outside (0, 1]")));
    }
    Ok(())
}

/// `t_probes` vectors `(I − (BᵀB)⁺(BᵀB)) g` for independent Gaussian `g`.
pub fn kernel_probe(b: &SparseRowMatrix, t_probes: usize, cfg: &SketchConfig) -> Result<KernelProbe> {
    let factor = factor_gram(b, cfg.rank_tol);
    probe_with_factor(&factor, t_probes, cfg.seed)
}

fn probe_with_factor(factor: &PseudoinverseFactor, t_probes: usize, seed: u64) -> Result<KernelProbe> {
    if t_probes == 0 {
        return Err(Error::InvalidArgument(
            "at least one kernel probe is required".into(),
        ));
    }
    let d = factor.n_cols();
    let mut rng = stream(derive_seed(seed, tag::PROBE));
    let probes = (0..t_probes)
        .map(|_| {
            let g: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            instrument::record_solves(1);
            factor.project_kernel(&g)
        })
        .collect();
    Ok(KernelProbe { probes })
}

/// Estimates `τ^B_i(A)` within `[τ, d^{2θ} τ]` (with high probability)
/// using one factorization, `k` sketch solves, and `kernel_probes` probes.
pub fn approx_generalized_leverage(
    a: &SparseRowMatrix,
    b: &SparseRowMatrix,
    theta: f64,
    cfg: &SketchConfig,
) -> Result<ScoreVector> {
    if a.n_cols() != b.n_cols() {
        return Err(Error::DimensionMismatch(format!(
            "A has {} columns, B has {}",
            a.n_cols(),
            b.n_cols()
        )));
    }
    check_theta(theta)?;
    let factor = factor_gram(b, cfg.rank_tol);
    let m = build_with_factor(b, &factor, theta, cfg)?;
    let probe = probe_with_factor(&factor, cfg.kernel_probes, cfg.seed)?;
    let safety = (a.n_cols() as f64).powf(theta);
    Ok(estimate_rows(a, &m, &probe, safety, cfg.kernel_tol))
}

/// Applies a prebuilt sketch and probe set to every row of `A`.
pub fn estimate_rows(
    a: &SparseRowMatrix,
    m: &DMatrix<f64>,
    probe: &KernelProbe,
    safety: f64,
    ktol: f64,
) -> ScoreVector {
    let k = m.nrows();
    let d = m.ncols();
    // row-major copy of Mᵀ so that column j of M is contiguous
    let mut mt = vec![0.0; d * k];
    for j in 0..d {
        for s in 0..k {
            mt[j * k + s] = m[(s, j)];
        }
    }
    let probe_norms: Vec<f64> = probe
        .probes
        .iter()
        .map(|z| z.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let mut y = vec![0.0; k];
    ScoreVector::new(
        a.rows()
            .map(|r| {
                let norm = r.norm_sq().sqrt();
                if norm == 0.0 {
                    return Score::Finite(0.0);
                }
                let flagged = probe
                    .probes
                    .iter()
                    .zip(&probe_norms)
                    .any(|(z, zn)| r.dot_dense(z).abs() > ktol * norm * zn);
                if flagged {
                    return Score::Infinite;
                }
                y.iter_mut().for_each(|v| *v = 0.0);
                for (j, v) in r.iter() {
                    for (ys, ms) in y.iter_mut().zip(&mt[j * k..(j + 1) * k]) {
                        *ys += v * ms;
                    }
                }
                Score::Finite(safety * y.iter().map(|v| v * v).sum::<f64>())
            })
            .collect(),
    )
}
