//! Exact leverage machinery built on a factorization of `AᵀA`.
//!
//! The Gram matrix is never formed for factoring. A triangular factor `R`
//! with `RᵀR = AᵀA` is accumulated block by block with Householder QR and
//! then decomposed by SVD, so singular values are accurate relative to the
//! largest one even when `AᵀA` itself would lose half the digits.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::config::{DEFAULT_KERNEL_TOL, DEFAULT_RANK_TOL};
use crate::error::{Error, Result};
use crate::instrument;
use crate::matrix::{DenseVector, RowView, SparseRowMatrix};

/// One leverage value or overestimate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Score {
    Finite(f64),
    /// The row has a component outside the row space of the reference matrix.
    Infinite,
}

impl Score {
    pub fn is_infinite(self) -> bool {
        matches!(self, Score::Infinite)
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            Score::Finite(v) => Some(v),
            Score::Infinite => None,
        }
    }

    /// The value with `Infinite` replaced by `cap`.
    pub fn or(self, cap: f64) -> f64 {
        self.finite().unwrap_or(cap)
    }
}

/// Per-row scores, possibly tagged infinite.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ScoreVector {
    values: Vec<Score>,
}

impl ScoreVector {
    pub fn new(values: Vec<Score>) -> Self {
        ScoreVector { values }
    }

    pub fn from_finite(values: Vec<f64>) -> Self {
        ScoreVector {
            values: values.into_iter().map(Score::Finite).collect(),
        }
    }

    pub fn ones(n: usize) -> Self {
        Self::from_finite(vec![1.0; n])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, i: usize) -> Score {
        self.values[i]
    }

    pub fn values(&self) -> &[Score] {
        &self.values
    }

    pub fn infinite_count(&self) -> usize {
        self.values.iter().filter(|s| s.is_infinite()).count()
    }

    /// All values with `Infinite` replaced by `cap`.
    pub fn finite_or(&self, cap: f64) -> Vec<f64> {
        self.values.iter().map(|s| s.or(cap)).collect()
    }

    /// `Some` only when no entry is infinite.
    pub fn to_finite(&self) -> Option<Vec<f64>> {
        self.values.iter().map(|s| s.finite()).collect()
    }

    /// Sum of finite entries.
    pub fn sum_finite(&self) -> f64 {
        self.values.iter().filter_map(|s| s.finite()).sum()
    }
}

/// Factorization `AᵀA = V Σ² Vᵀ` truncated to numerical rank.
#[derive(Clone, Debug)]
pub struct PseudoinverseFactor {
    n_cols: usize,
    v: DMatrix<f64>,
    sigma: Vec<f64>,
    kernel: DMatrix<f64>,
    truncation_tol: f64,
    // row-major d × r copy of V Σ⁻¹ for sparse row products
    whitener: Vec<f64>,
    // row-major d × (d - r) copy of the kernel basis
    kernel_rows: Vec<f64>,
}

impl PseudoinverseFactor {
    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    /// Singular values of `A` (square roots of the eigenvalues of `AᵀA`), descending.
    pub fn singular_values(&self) -> &[f64] {
        &self.sigma
    }

    /// `d × r`, orthonormal columns.
    pub fn right_singular_vectors(&self) -> &DMatrix<f64> {
        &self.v
    }

    /// `d × (d − r)` orthonormal basis of `ker(A)`.
    pub fn kernel_basis(&self) -> &DMatrix<f64> {
        &self.kernel
    }

    pub fn truncation_tol(&self) -> f64 {
        self.truncation_tol
    }

    /// `V Σ⁻¹` as a dense `d × r` matrix.
    pub fn whitener(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n_cols, self.rank(), &self.whitener)
    }

    /// `Σ⁻¹ Vᵀ a` for a sparse row.
    pub fn whiten_row(&self, row: RowView<'_>) -> Vec<f64> {
        let r = self.rank();
        let mut y = vec![0.0; r];
        for (j, a) in row.iter() {
            let w = &self.whitener[j * r..(j + 1) * r];
            for (yk, wk) in y.iter_mut().zip(w) {
                *yk += a * wk;
            }
        }
        y
    }

    /// `aᵀ (AᵀA)⁺ a`.
    pub fn quad_row(&self, row: RowView<'_>) -> f64 {
        self.whiten_row(row).iter().map(|v| v * v).sum()
    }

    /// `aᵀ (AᵀA)⁺ b`.
    pub fn bilinear_rows(&self, a: RowView<'_>, b: RowView<'_>) -> f64 {
        let ya = self.whiten_row(a);
        let yb = self.whiten_row(b);
        ya.iter().zip(&yb).map(|(x, y)| x * y).sum()
    }

    /// `‖Kᵀa‖²`, the squared norm of the component of `a` in `ker(A)`.
    pub fn kernel_component_sq(&self, row: RowView<'_>) -> f64 {
        let m = self.n_cols - self.rank();
        if m == 0 {
            return 0.0;
        }
        let mut y = vec![0.0; m];
        for (j, a) in row.iter() {
            let kr = &self.kernel_rows[j * m..(j + 1) * m];
            for (yk, kk) in y.iter_mut().zip(kr) {
                *yk += a * kk;
            }
        }
        y.iter().map(|v| v * v).sum()
    }

    /// `(AᵀA)⁺ x`. Counted as one solve.
    pub fn solve(&self, x: &[f64]) -> Vec<f64> {
        instrument::record_solves(1);
        self.apply_pinv(x)
    }

    fn apply_pinv(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_cols];
        for (k, s) in self.sigma.iter().enumerate() {
            let col = self.v.column(k);
            let c = col.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() / (s * s);
            for (o, vk) in out.iter_mut().zip(col.iter()) {
                *o += c * vk;
            }
        }
        out
    }

    /// `(I − (AᵀA)⁺(AᵀA)) x`, the projection of `x` onto `ker(A)`.
    pub fn project_kernel(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_cols];
        for col in self.kernel.column_iter() {
            let c: f64 = col.iter().zip(x).map(|(a, b)| a * b).sum();
            for (o, k) in out.iter_mut().zip(col.iter()) {
                *o += c * k;
            }
        }
        out
    }

    /// Dense `(AᵀA)⁺`.
    pub fn pseudoinverse(&self) -> DMatrix<f64> {
        let w = self.whitener();
        &w * w.transpose()
    }
}

const TSQR_BLOCK: usize = 128;

/// Upper-triangular `d × d` factor `R` with `RᵀR = AᵀA`.
pub(crate) fn triangular_factor(a: &SparseRowMatrix) -> DMatrix<f64> {
    let d = a.n_cols();
    let n = a.n_rows();
    let mut r = DMatrix::<f64>::zeros(0, d);
    let mut start = 0;
    while start < n {
        let end = (start + TSQR_BLOCK).min(n);
        let top = r.nrows();
        let mut stack = DMatrix::<f64>::zeros(top + end - start, d);
        stack.view_mut((0, 0), (top, d)).copy_from(&r);
        for (k, i) in (start..end).enumerate() {
            for (j, v) in a.row(i).iter() {
                stack[(top + k, j)] = v;
            }
        }
        r = stack.qr().r();
        start = end;
    }
    let mut out = DMatrix::zeros(d, d);
    let rows = r.nrows().min(d);
    out.view_mut((0, 0), (rows, d)).copy_from(&r.rows(0, rows));
    out
}

/// Factors `AᵀA`, keeping singular values `σ_i > rtol · σ_max`.
pub fn factor_gram(a: &SparseRowMatrix, rtol: f64) -> PseudoinverseFactor {
    instrument::record_factorization();
    let d = a.n_cols();
    // Rᵀ = U Σ Wᵀ gives R = W Σ Uᵀ. nalgebra's SVD run directly on a triangular
    // R with a near-zero trailing diagonal can lose several digits.
    let svd = triangular_factor(a).transpose().svd(true, false);
    let vt = svd.u.expect("u requested").transpose();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&x, &y| svd.singular_values[y].total_cmp(&svd.singular_values[x]));
    let smax = order.first().map_or(0.0, |&k| svd.singular_values[k]);
    let cutoff = rtol * smax;
    let (kept, dropped): (Vec<usize>, Vec<usize>) = order
        .iter()
        .partition(|&&k| smax > 0.0 && svd.singular_values[k] > cutoff);

    let columns = |idx: &[usize]| {
        let mut m = DMatrix::zeros(d, idx.len());
        for (c, &k) in idx.iter().enumerate() {
            for j in 0..d {
                m[(j, c)] = vt[(k, j)];
            }
        }
        m
    };
    let v = columns(&kept);
    let kernel = columns(&dropped);
    let sigma: Vec<f64> = kept.iter().map(|&k| svd.singular_values[k]).collect();

    let rank = sigma.len();
    let mut whitener = vec![0.0; d * rank];
    for j in 0..d {
        for (k, s) in sigma.iter().enumerate() {
            whitener[j * rank + k] = v[(j, k)] / s;
        }
    }
    let m = d - rank;
    let mut kernel_rows = vec![0.0; d * m];
    for j in 0..d {
        for k in 0..m {
            kernel_rows[j * m + k] = kernel[(j, k)];
        }
    }
    PseudoinverseFactor {
        n_cols: d,
        v,
        sigma,
        kernel,
        truncation_tol: rtol,
        whitener,
        kernel_rows,
    }
}

/// `τ_i(A) = a_iᵀ(AᵀA)⁺a_i`, clamped to `[0, 1]`.
pub fn exact_leverage_scores(a: &SparseRowMatrix) -> ScoreVector {
    let f = factor_gram(a, DEFAULT_RANK_TOL);
    ScoreVector::from_finite(a.rows().map(|r| f.quad_row(r).clamp(0.0, 1.0)).collect())
}

fn check_index(a: &SparseRowMatrix, i: usize) -> Result<()> {
    if i >= a.n_rows() {
        return Err(Error::IndexOutOfRange {
            index: i,
            len: a.n_rows(),
        });
    }
    Ok(())
}

/// `τ_ij(A) = a_iᵀ(AᵀA)⁺a_j`.
pub fn cross_leverage(a: &SparseRowMatrix, i: usize, j: usize) -> Result<f64> {
    check_index(a, i)?;
    check_index(a, j)?;
    let f = factor_gram(a, DEFAULT_RANK_TOL);
    Ok(f.bilinear_rows(a.row(i), a.row(j)))
}

/// All cross scores `τ_ij` for fixed `i`, i.e. row `i` of `A(AᵀA)⁺Aᵀ`.
pub fn cross_leverage_row(a: &SparseRowMatrix, f: &PseudoinverseFactor, i: usize) -> Vec<f64> {
    let yi = f.whiten_row(a.row(i));
    a.rows()
        .map(|r| f.whiten_row(r).iter().zip(&yi).map(|(x, y)| x * y).sum())
        .collect()
}

/// Minimum-norm `x` with `Aᵀx = a_i`, namely `A(AᵀA)⁺a_i`.
pub fn min_norm_witness(a: &SparseRowMatrix, i: usize) -> Result<DenseVector> {
    check_index(a, i)?;
    let f = factor_gram(a, DEFAULT_RANK_TOL);
    let ai = a.row(i).to_dense(a.n_cols());
    let z = f.solve(&ai);
    Ok(DenseVector(a.mul_vec(&z)))
}

/// Scores of the rows of `A` measured through a factor of some `BᵀB`.
///
/// Rows whose component in `ker(B)` exceeds `ktol · ‖a_i‖` are infinite;
/// zero rows score 0.
pub fn scores_against(a: &SparseRowMatrix, f: &PseudoinverseFactor, ktol: f64) -> ScoreVector {
    ScoreVector::new(
        a.rows()
            .map(|r| {
                let norm_sq = r.norm_sq();
                if norm_sq == 0.0 {
                    Score::Finite(0.0)
                } else if f.kernel_component_sq(r) > ktol * ktol * norm_sq {
                    Score::Infinite
                } else {
                    Score::Finite(f.quad_row(r).max(0.0))
                }
            })
            .collect(),
    )
}

/// `τ^B_i(A)`: `a_iᵀ(BᵀB)⁺a_i` when `a_i ⊥ ker(B)`, infinite otherwise.
pub fn generalized_leverage_scores(
    a: &SparseRowMatrix,
    b: &SparseRowMatrix,
    ktol: f64,
) -> Result<ScoreVector> {
    if a.n_cols() != b.n_cols() {
        return Err(Error::DimensionMismatch(format!(
            "A has {} columns, B has {}",
            a.n_cols(),
            b.n_cols()
        )));
    }
    let f = factor_gram(b, DEFAULT_RANK_TOL);
    Ok(scores_against(a, &f, ktol))
}

/// `generalized_leverage_scores` with the default kernel tolerance.
pub fn generalized_leverage_scores_default(a: &SparseRowMatrix, b: &SparseRowMatrix) -> Result<ScoreVector> {
    generalized_leverage_scores(a, b, DEFAULT_KERNEL_TOL)
}

const SCORE_HEADER: &str = "row_index\tscore";

/// Writes `row_index\tscore` TSV; infinite entries are the token `inf`.
pub fn write_scores(path: impl AsRef<Path>, s: &ScoreVector) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "{SCORE_HEADER}").map_err(io)?;
    for (i, v) in s.values().iter().enumerate() {
        match v {
            Score::Finite(x) => writeln!(w, "{i}\t{x:.16e}").map_err(io)?,
            Score::Infinite => writeln!(w, "{i}\tinf").map_err(io)?,
        }
    }
    w.flush().map_err(io)
}

pub fn read_scores(path: impl AsRef<Path>) -> Result<ScoreVector> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    let mut header_seen = false;
    for (k, line) in BufReader::new(file).lines().enumerate() {
        let lineno = k + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !header_seen {
            if line != SCORE_HEADER {
                return Err(Error::format(
                    path,
                    lineno,
                    format!("expected header `{SCORE_HEADER}`"),
                ));
            }
            header_seen = true;
            continue;
        }
        let (i, v) = line
            .split_once('\t')
            .ok_or_else(|| Error::format(path, lineno, "expected two tab-separated fields"))?;
        let i: usize = i
            .parse()
            .map_err(|e| Error::format(path, lineno, format!("bad row index: {e}")))?;
        if i != out.len() {
            return Err(Error::format(
                path,
                lineno,
                format!("expected row index {}", out.len()),
            ));
        }
        let score = if v == "inf" {
            Score::Infinite
        } else {
            let x: f64 = v
                .parse()
                .map_err(|e| Error::format(path, lineno, format!("bad score: {e}")))?;
            if !x.is_finite() || x < 0.0 {
                return Err(Error::format(
                    path,
                    lineno,
                    "score must be finite and nonnegative",
                ));
            }
            Score::Finite(x)
        };
        out.push(score);
    }
    if !header_seen {
        return Err(Error::format(path, 0, "missing header"));
    }
    Ok(ScoreVector::new(out))
}
