//! Coherence-reducing reweighting.
//!
//! [`compute_reweighting`] repeatedly visits rows whose leverage in `WA`
//! exceeds a target and shrinks their weight until the leverage meets the
//! target (or zeroes the row when its leverage is numerically 1). Scores
//! are kept current with rank-one updates between periodic refreshes.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::config::DEFAULT_RANK_TOL;
use crate::error::{Error, Result};
use crate::leverage::{factor_gram, triangular_factor, ScoreVector};
use crate::matrix::SparseRowMatrix;

/// Diagonal weights in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Reweighting {
    pub weights: Vec<f64>,
}

impl Reweighting {
    pub fn identity(n: usize) -> Self {
        Reweighting {
            weights: vec![1.0; n],
        }
    }

    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if let Some(i) = weights.iter().position(|w| !(0.0..=1.0).contains(w)) {
            return Err(Error::InvalidArgument(format!(
                "weight {i} = {} outside [0, 1]",
                weights[i]
            )));
        }
        Ok(Reweighting { weights })
    }
}

/// Evidence that a reweighting meets its targets.
#[derive(Clone, Debug, Serialize)]
pub struct ReweightCertificate {
    pub target: Vec<f64>,
    pub achieved: Vec<f64>,
    /// `Σ u_i` over rows whose weight is not 1.
    pub reweighted_mass: f64,
    pub reweighted_count: usize,
    /// `max_i (τ_i(WA) − u_i)`, computed from a fresh factorization.
    pub max_violation: f64,
    pub sweeps_used: usize,
}

/// Scores after scaling row `i` by `√(1 − γ)`:
/// `τ′_i = (1−γ)τ_i/(1−γτ_i)` and `τ′_j = τ_j + γτ_ij²/(1−γτ_i)`.
pub fn rank_one_update(tau: &[f64], cross_i: &[f64], i: usize, gamma: f64) -> Result<Vec<f64>> {
    if tau.len() != cross_i.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} scores but {} cross scores",
            tau.len(),
            cross_i.len()
        )));
    }
    if i >= tau.len() {
        return Err(Error::IndexOutOfRange {
            index: i,
            len: tau.len(),
        });
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidArgument(format!("gamma = {gamma} outside (0, 1)")));
    }
    let denom = 1.0 - gamma * tau[i];
    if denom <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "1 - gamma * tau_i = {denom} is not positive"
        )));
    }
    Ok(tau
        .iter()
        .zip(cross_i)
        .enumerate()
        .map(|(j, (&t, &c))| {
            if j == i {
                (1.0 - gamma) * t / denom
            } else {
                t + gamma * c * c / denom
            }
        })
        .collect())
}

/// The `γ` for which [`rank_one_update`] moves `τ_i` exactly to `u_i`.
pub fn gamma_for_target(tau_i: f64, u_i: f64) -> Result<f64> {
    if tau_i >= 1.0 {
        return Err(Error::InvalidArgument(format!(
            "tau_i = {tau_i} >= 1; the row must be zeroed instead"
        )));
    }
    if !(u_i > 0.0 && u_i <= tau_i) {
        return Err(Error::InvalidArgument(format!(
            "need 0 < u_i <= tau_i, got u_i = {u_i}, tau_i = {tau_i}"
        )));
    }
    Ok((tau_i - u_i) / (tau_i * (1.0 - u_i)))
}

const ZERO_THRESHOLD: f64 = 1.0 - 1e-6;

struct State<'a> {
    a: &'a SparseRowMatrix,
    w: Vec<f64>,
    tau: Vec<f64>,
    pinv: DMatrix<f64>,
    changes_since_refresh: usize,
}

impl<'a> State<'a> {
    fn new(a: &'a SparseRowMatrix) -> Result<Self> {
        let mut s = State {
            a,
            w: vec![1.0; a.n_rows()],
            tau: Vec::new(),
            pinv: DMatrix::zeros(a.n_cols(), a.n_cols()),
            changes_since_refresh: 0,
        };
        s.refresh()?;
        Ok(s)
    }

    fn refresh(&mut self) -> Result<()> {
        let wa = self.a.scale_rows(&self.w)?;
        let f = factor_gram(&wa, DEFAULT_RANK_TOL);
        self.tau = wa.rows().map(|r| f.quad_row(r).clamp(0.0, 1.0)).collect();
        self.pinv = f.pseudoinverse();
        self.changes_since_refresh = 0;
        Ok(())
    }

    fn shrink(&mut self, i: usize, gamma: f64) {
        let d = self.a.n_cols();
        let row = self.a.row(i);
        let mut y = vec![0.0; d];
        for (j, v) in row.iter() {
            let x = self.w[i] * v;
            for (k, yk) in y.iter_mut().enumerate() {
                *yk += self.pinv[(k, j)] * x;
            }
        }
        let cross: Vec<f64> = self
            .a
            .rows()
            .zip(&self.w)
            .map(|(r, &wj)| wj * r.dot_dense(&y))
            .collect();
        // same arithmetic as rank_one_update, done in place
        let denom = 1.0 - gamma * self.tau[i];
        for (j, (t, c)) in self.tau.iter_mut().zip(&cross).enumerate() {
            if j == i {
                *t = (1.0 - gamma) * *t / denom;
            } else {
                *t += gamma * c * c / denom;
            }
        }
        let yv = nalgebra::DVector::from_vec(y);
        self.pinv += (gamma / denom) * &yv * yv.transpose();
        self.w[i] *= (1.0 - gamma).sqrt();
    }
}

fn violations(tau: &[f64], u: &[f64], tol: f64) -> Vec<(usize, f64)> {
    tau.iter()
        .zip(u)
        .enumerate()
        .filter(|(_, (t, ui))| **t > **ui + tol)
        .map(|(i, (t, ui))| (i, t - ui))
        .collect()
}

/// Finds `W` with `τ_i(WA) ≤ u_i + tol` for every row, visiting rows in
/// ascending order each sweep.
pub fn compute_reweighting(
    a: &SparseRowMatrix,
    u: &ScoreVector,
    tol: f64,
    max_sweeps: usize,
) -> Result<(Reweighting, ReweightCertificate)> {
    let n = a.n_rows();
    if u.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} targets for {n} rows",
            u.len()
        )));
    }
    let u = u
        .to_finite()
        .ok_or_else(|| Error::InvalidArgument("targets must be finite".into()))?;
    if let Some(i) = u.iter().position(|&x| !(x > 0.0 && x.is_finite())) {
        return Err(Error::InvalidArgument(format!(
            "target {i} = {} must be positive",
            u[i]
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("tol must be positive".into()));
    }

    let mut st = State::new(a)?;
    let mut sweeps = 0;
    loop {
        if sweeps >= max_sweeps {
            st.refresh()?;
            return Err(Error::ReweightNonConvergence {
                sweeps,
                violations: violations(&st.tau, &u, tol),
                weights: st.w,
            });
        }
        sweeps += 1;
        let mut changed = false;
        for i in 0..n {
            if st.tau[i] <= u[i] + tol {
                continue;
            }
            changed = true;
            if st.tau[i] < ZERO_THRESHOLD {
                let gamma = gamma_for_target(st.tau[i], u[i])?;
                st.shrink(i, gamma);
                st.changes_since_refresh += 1;
                if st.changes_since_refresh >= n {
                    st.refresh()?;
                }
            } else {
                st.w[i] = 0.0;
                st.refresh()?;
            }
        }
        if !changed {
            st.refresh()?;
            if violations(&st.tau, &u, tol).is_empty() {
                break;
            }
        }
    }

    let max_violation = st
        .tau
        .iter()
        .zip(&u)
        .map(|(t, ui)| t - ui)
        .fold(f64::NEG_INFINITY, f64::max);
    let (mass, count) =
        st.w.iter()
            .zip(&u)
            .filter(|(w, _)| **w != 1.0)
            .fold((0.0, 0), |(m, c), (_, ui)| (m + ui, c + 1));
    let cert = ReweightCertificate {
        target: u,
        achieved: st.tau.clone(),
        reweighted_mass: mass,
        reweighted_count: count,
        max_violation,
        sweeps_used: sweeps,
    };
    Ok((Reweighting { weights: st.w }, cert))
}

fn leverage_of_row(a: &SparseRowMatrix, w: &[f64], i: usize) -> Result<f64> {
    let wa = a.scale_rows(w)?;
    let f = factor_gram(&wa, DEFAULT_RANK_TOL);
    Ok(f.quad_row(wa.row(i)))
}

/// Both sides of the leverage comparison inequality
/// `τ_i(W̄A) ≤ (W̄_ii²/W_ii²)(1 + √λ_max(A(AᵀW̄²A)⁺Aᵀ)·‖W − W̄‖_∞)²·τ_i(WA)`.
pub fn compare_leverage_bound(
    a: &SparseRowMatrix,
    w: &Reweighting,
    wbar: &Reweighting,
    i: usize,
) -> Result<(f64, f64)> {
    let n = a.n_rows();
    if w.weights.len() != n || wbar.weights.len() != n {
        return Err(Error::DimensionMismatch(
            "weights must have one entry per row".into(),
        ));
    }
    if i >= n {
        return Err(Error::IndexOutOfRange { index: i, len: n });
    }
    if w.weights[i] <= 0.0 || wbar.weights[i] <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "weight of row {i} must be positive"
        )));
    }
    let lhs = leverage_of_row(a, &wbar.weights, i)?;
    let tau_w = leverage_of_row(a, &w.weights, i)?;

    // λ_max(A(AᵀW̄²A)⁺Aᵀ) = ‖R Z̄‖₂² with RᵀR = AᵀA and Z̄ = V̄Σ̄⁻¹ from W̄A
    let fbar = factor_gram(&a.scale_rows(&wbar.weights)?, DEFAULT_RANK_TOL);
    let c = triangular_factor(a) * fbar.whitener();
    let lambda_max = if c.ncols() == 0 {
        0.0
    } else {
        c.singular_values().max().powi(2)
    };
    let dist = w
        .weights
        .iter()
        .zip(&wbar.weights)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    let ratio = (wbar.weights[i] / w.weights[i]).powi(2);
    let rhs = ratio * (1.0 + lambda_max.sqrt() * dist).powi(2) * tau_w;
    Ok((lhs, rhs))
}

/// Writes `row_index\tweight` for every row, 17 significant digits.
pub fn write_reweighting(path: impl AsRef<Path>, w: &Reweighting) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(out, "row_index\tweight").map_err(io)?;
    for (i, x) in w.weights.iter().enumerate() {
        writeln!(out, "{i}\t{x:.16e}").map_err(io)?;
    }
    out.flush().map_err(io)
}
