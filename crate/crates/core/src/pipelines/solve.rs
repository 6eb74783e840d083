use nalgebra::DMatrix;
use serde::Serialize;

use super::SketchResult;
use crate::config::DEFAULT_RANK_TOL;
use crate::error::{Error, Result};
use crate::leverage::factor_gram;
use crate::matrix::{DenseVector, SparseRowMatrix};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolveReport {
    #[serde(skip)]
    pub x: DenseVector,
    pub iterations: usize,
    /// `‖Aᵀ(b − Ax)‖ / ‖Aᵀb‖` at exit.
    pub residual: f64,
    pub converged: bool,
    pub preconditioned: bool,
}

/// Right preconditioner `V Σ⁻¹` from a factorization of `ÃᵀÃ`.
pub fn preconditioner(a: &SparseRowMatrix, sketch: &SketchResult) -> Result<DMatrix<f64>> {
    let at = sketch.materialize(a)?;
    Ok(factor_gram(&at, DEFAULT_RANK_TOL).whitener())
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn apply(z: Option<&DMatrix<f64>>, y: &[f64], d: usize) -> Vec<f64> {
    match z {
        None => y.to_vec(),
        Some(z) => {
            let mut out = vec![0.0; d];
            for (k, yk) in y.iter().enumerate() {
                for (j, o) in out.iter_mut().enumerate() {
                    *o += z[(j, k)] * yk;
                }
            }
            out
        }
    }
}

fn apply_t(z: Option<&DMatrix<f64>>, x: &[f64]) -> Vec<f64> {
    match z {
        None => x.to_vec(),
        Some(z) => (0..z.ncols())
            .map(|k| z.column(k).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect(),
    }
}

/// Conjugate gradient on the normal equations of `min ‖A Z y − b‖`, with
/// `x = Z y`; `Z = I` when no preconditioner is given.
///
/// Stops once `‖Aᵀ(b − Ax)‖ ≤ tol · ‖Aᵀb‖` or after `max_iters`
/// iterations; one iteration is one product with `A` and one with `Aᵀ`.
pub fn cgls(
    a: &SparseRowMatrix,
    b: &DenseVector,
    z: Option<&DMatrix<f64>>,
    tol: f64,
    max_iters: usize,
) -> Result<SolveReport> {
    let (n, d) = (a.n_rows(), a.n_cols());
    if b.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "b has {} entries for {n} rows",
            b.len()
        )));
    }
    if let Some(z) = z {
        if z.nrows() != d {
            return Err(Error::DimensionMismatch(
                "preconditioner has the wrong row count".into(),
            ));
        }
    }
    let atb = a.tr_mul_vec(b.as_slice());
    let atb_norm = norm(&atb);
    let r_dim = z.map_or(d, |z| z.ncols());
    let mut y = vec![0.0; r_dim];
    let report = |y: &[f64], iterations, residual, converged| SolveReport {
        x: DenseVector(apply(z, y, d)),
        iterations,
        residual,
        converged,
        preconditioned: z.is_some(),
    };
    if atb_norm == 0.0 {
        return Ok(report(&y, 0, 0.0, true));
    }
    let mut r = b.0.clone();
    let mut s = apply_t(z, &atb);
    let mut p = s.clone();
    let mut gamma: f64 = s.iter().map(|v| v * v).sum();
    let mut residual = 1.0;
    for it in 1..=max_iters {
        let q = a.mul_vec(&apply(z, &p, d));
        let qq: f64 = q.iter().map(|v| v * v).sum();
        if qq == 0.0 || gamma == 0.0 {
            return Ok(report(&y, it - 1, residual, false));
        }
        let step = gamma / qq;
        for (yk, pk) in y.iter_mut().zip(&p) {
            *yk += step * pk;
        }
        for (rk, qk) in r.iter_mut().zip(&q) {
            *rk -= step * qk;
        }
        let atr = a.tr_mul_vec(&r);
        residual = norm(&atr) / atb_norm;
        if residual <= tol {
            return Ok(report(&y, it, residual, true));
        }
        s = apply_t(z, &atr);
        let next: f64 = s.iter().map(|v| v * v).sum();
        let beta = next / gamma;
        gamma = next;
        for (pk, sk) in p.iter_mut().zip(&s) {
            *pk = sk + beta * *pk;
        }
    }
    Ok(report(&y, max_iters, residual, false))
}

/// Least squares preconditioned by the sketch; non-convergence is an error.
pub fn precondition_solve(
    a: &SparseRowMatrix,
    b: &DenseVector,
    sketch: &SketchResult,
    tol: f64,
    max_iters: usize,
) -> Result<SolveReport> {
    let z = preconditioner(a, sketch)?;
    let rep = cgls(a, b, Some(&z), tol, max_iters)?;
    if !rep.converged {
        return Err(Error::NonConvergence {
            iterations: rep.iterations,
            detail: format!("relative normal-equation residual {:.3e}", rep.residual),
        });
    }
    Ok(rep)
}
