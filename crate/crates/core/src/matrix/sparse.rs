use nalgebra::DMatrix;

use super::WeightedRowSample;
use crate::error::{Error, Result};

/// Compressed row-major sparse matrix.
///
/// Every algorithm in the crate touches the matrix one row at a time, so
/// rows are stored contiguously: row `i` occupies
/// `row_offsets[i]..row_offsets[i + 1]` of `col_indices` and `values`,
/// with strictly increasing column indices inside the row.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseRowMatrix {
    n_rows: usize,
    n_cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

/// Borrowed view of one sparse row.
#[derive(Clone, Copy, Debug)]
pub struct RowView<'a> {
    pub cols: &'a [usize],
    pub vals: &'a [f64],
}

impl<'a> RowView<'a> {
    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + 'a {
        self.cols.iter().copied().zip(self.vals.iter().copied())
    }

    pub fn norm_sq(&self) -> f64 {
        self.vals.iter().map(|v| v * v).sum()
    }

    pub fn dot_dense(&self, x: &[f64]) -> f64 {
        self.iter().map(|(j, v)| v * x[j]).sum()
    }

    pub fn dot(&self, other: &RowView<'_>) -> f64 {
        let (mut p, mut q, mut acc) = (0, 0, 0.0);
        while p < self.cols.len() && q < other.cols.len() {
            match self.cols[p].cmp(&other.cols[q]) {
                std::cmp::Ordering::Less => p += 1,
                std::cmp::Ordering::Greater => q += 1,
                std::cmp::Ordering::Equal => {
                    acc += self.vals[p] * other.vals[q];
                    p += 1;
                    q += 1;
                }
            }
        }
        acc
    }

    pub fn to_dense(&self, n_cols: usize) -> Vec<f64> {
        let mut out = vec![0.0; n_cols];
        for (j, v) in self.iter() {
            out[j] = v;
        }
        out
    }
}

impl SparseRowMatrix {
    /// Builds a matrix from raw CSR arrays, checking every invariant.
    pub fn from_csr(
        n_rows: usize,
        n_cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        let m = SparseRowMatrix {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        };
        m.validate()?;
        Ok(m)
    }

    /// Builds a matrix from `(row, col, value)` triplets. Duplicates are
    /// summed and entries that end up exactly zero are dropped.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let mut t: Vec<(usize, usize, f64)> = triplets.into_iter().collect();
        for &(i, j, v) in &t {
            if i >= n_rows || j >= n_cols {
                return Err(Error::Contract(format!(
                    "entry ({i}, {j}) outside a {n_rows}x{n_cols} matrix"
                )));
            }
            if !v.is_finite() {
                return Err(Error::Contract(format!("non-finite value at ({i}, {j})")));
            }
        }
        t.sort_unstable_by_key(|e| (e.0, e.1));
        let mut row_offsets = vec![0usize; n_rows + 1];
        let mut col_indices = Vec::with_capacity(t.len());
        let mut values = Vec::with_capacity(t.len());
        let mut k = 0;
        while k < t.len() {
            let (i, j, mut v) = t[k];
            k += 1;
            while k < t.len() && t[k].0 == i && t[k].1 == j {
                v += t[k].2;
                k += 1;
            }
            if v != 0.0 {
                col_indices.push(j);
                values.push(v);
                row_offsets[i + 1] += 1;
            }
        }
        for i in 0..n_rows {
            row_offsets[i + 1] += row_offsets[i];
        }
        Self::from_csr(n_rows, n_cols, row_offsets, col_indices, values)
    }

    /// Builds a matrix from dense rows, dropping zeros.
    pub fn from_dense_rows(n_cols: usize, rows: &[Vec<f64>]) -> Result<Self> {
        let triplets = rows
            .iter()
            .enumerate()
            .flat_map(|(i, r)| r.iter().enumerate().map(move |(j, &v)| (i, j, v)));
        for (i, r) in rows.iter().enumerate() {
            if r.len() != n_cols {
                return Err(Error::DimensionMismatch(format!(
                    "row {i} has {} entries, expected {n_cols}",
                    r.len()
                )));
            }
        }
        Self::from_triplets(rows.len(), n_cols, triplets)
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Result<Self> {
        let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
        Self::from_dense_rows(m.ncols(), &rows)
    }

    pub fn identity(n: usize) -> Self {
        SparseRowMatrix {
            n_rows: n,
            n_cols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        SparseRowMatrix {
            n_rows,
            n_cols,
            row_offsets: vec![0; n_rows + 1],
            col_indices: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Checks all structural invariants.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Contract(m));
        if self.row_offsets.len() != self.n_rows + 1 {
            return bad(format!(
                "row_offsets has length {}, expected {}",
                self.row_offsets.len(),
                self.n_rows + 1
            ));
        }
        if self.row_offsets[0] != 0 || self.row_offsets[self.n_rows] != self.values.len() {
            return bad("row_offsets must start at 0 and end at nnz".into());
        }
        if self.col_indices.len() != self.values.len() {
            return bad("col_indices and values differ in length".into());
        }
        for i in 0..self.n_rows {
            let (s, e) = (self.row_offsets[i], self.row_offsets[i + 1]);
            if s > e {
                return bad(format!("row_offsets decreases at row {i}"));
            }
            let cols = &self.col_indices[s..e];
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return bad(format!("row {i} columns not strictly increasing"));
            }
            if cols.last().is_some_and(|&c| c >= self.n_cols) {
                return bad(format!("row {i} has a column index >= {}", self.n_cols));
            }
        }
        if let Some(k) = self.values.iter().position(|v| !v.is_finite()) {
            return bad(format!("non-finite value at storage position {k}"));
        }
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn row(&self, i: usize) -> RowView<'_> {
        let (s, e) = (self.row_offsets[i], self.row_offsets[i + 1]);
        RowView {
            cols: &self.col_indices[s..e],
            vals: &self.values[s..e],
        }
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = RowView<'_>> + '_ {
        (0..self.n_rows).map(move |i| self.row(i))
    }

    pub fn row_norms_sq(&self) -> Vec<f64> {
        self.rows().map(|r| r.norm_sq()).collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n_rows, self.n_cols);
        for (i, r) in self.rows().enumerate() {
            for (j, v) in r.iter() {
                m[(i, j)] = v;
            }
        }
        m
    }

    /// `A x` for a dense `x` of length `n_cols`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n_cols);
        self.rows().map(|r| r.dot_dense(x)).collect()
    }

    /// `Aᵀ y` for a dense `y` of length `n_rows`.
    pub fn tr_mul_vec(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.n_rows);
        let mut out = vec![0.0; self.n_cols];
        for (r, &yi) in self.rows().zip(y) {
            if yi != 0.0 {
                for (j, v) in r.iter() {
                    out[j] += v * yi;
                }
            }
        }
        out
    }

    /// Rows `indices[k]` scaled by `scales[k]`, in the given order.
    pub fn select_scaled(&self, indices: &[usize], scales: &[f64]) -> Result<Self> {
        if indices.len() != scales.len() {
            return Err(Error::DimensionMismatch(
                "indices and scales differ in length".into(),
            ));
        }
        let mut row_offsets = Vec::with_capacity(indices.len() + 1);
        row_offsets.push(0);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        for (&i, &s) in indices.iter().zip(scales) {
            if i >= self.n_rows {
                return Err(Error::IndexOutOfRange {
                    index: i,
                    len: self.n_rows,
                });
            }
            if !s.is_finite() {
                return Err(Error::Contract(format!("non-finite scale for row {i}")));
            }
            if s != 0.0 {
                let r = self.row(i);
                for (j, v) in r.iter() {
                    let sv = s * v;
                    if sv != 0.0 {
                        col_indices.push(j);
                        values.push(sv);
                    }
                }
            }
            row_offsets.push(values.len());
        }
        Ok(SparseRowMatrix {
            n_rows: indices.len(),
            n_cols: self.n_cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// Unscaled row subset.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        self.select_scaled(indices, &vec![1.0; indices.len()])
    }

    /// Every row `i` multiplied by `scales[i]`.
    pub fn scale_rows(&self, scales: &[f64]) -> Result<Self> {
        if scales.len() != self.n_rows {
            return Err(Error::DimensionMismatch(format!(
                "{} scales for {} rows",
                scales.len(),
                self.n_rows
            )));
        }
        let idx: Vec<usize> = (0..self.n_rows).collect();
        self.select_scaled(&idx, scales)
    }

    /// Vertical concatenation `[self; other]`.
    pub fn append(&self, other: &SparseRowMatrix) -> Result<Self> {
        if self.n_cols != other.n_cols {
            return Err(Error::DimensionMismatch(format!(
                "cannot stack {} columns on {} columns",
                other.n_cols, self.n_cols
            )));
        }
        let mut row_offsets = self.row_offsets.clone();
        let base = self.nnz();
        row_offsets.extend(other.row_offsets[1..].iter().map(|o| o + base));
        let mut col_indices = self.col_indices.clone();
        col_indices.extend_from_slice(&other.col_indices);
        let mut values = self.values.clone();
        values.extend_from_slice(&other.values);
        Ok(SparseRowMatrix {
            n_rows: self.n_rows + other.n_rows,
            n_cols: self.n_cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// `A Q` for a dense `n_cols × k` matrix `Q`, returned as a sparse matrix.
    pub fn mul_dense(&self, q: &DMatrix<f64>) -> Result<Self> {
        if q.nrows() != self.n_cols {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} times {}x{}",
                self.n_rows,
                self.n_cols,
                q.nrows(),
                q.ncols()
            )));
        }
        let k = q.ncols();
        let mut rows = Vec::with_capacity(self.n_rows);
        for r in self.rows() {
            let mut out = vec![0.0; k];
            for (j, v) in r.iter() {
                for (c, o) in out.iter_mut().enumerate() {
                    *o += v * q[(j, c)];
                }
            }
            rows.push(out);
        }
        Self::from_dense_rows(k, &rows)
    }
}

/// Dense `AᵀA`.
pub fn gram(a: &SparseRowMatrix) -> DMatrix<f64> {
    let d = a.n_cols();
    let mut g = DMatrix::zeros(d, d);
    for r in a.rows() {
        for (p, (j, vj)) in r.iter().enumerate() {
            for (k, vk) in r.iter().skip(p) {
                g[(j, k)] += vj * vk;
            }
        }
    }
    for j in 0..d {
        for k in (j + 1)..d {
            g[(k, j)] = g[(j, k)];
        }
    }
    g
}

/// Materializes `S A`: row `k` of the output is `weight_k · A[row_index_k]`.
pub fn materialize_sample(a: &SparseRowMatrix, s: &WeightedRowSample) -> Result<SparseRowMatrix> {
    if s.parent_rows() != a.n_rows() {
        return Err(Error::Contract(format!(
            "sample over {} rows applied to a matrix with {} rows",
            s.parent_rows(),
            a.n_rows()
        )));
    }
    let (idx, w): (Vec<usize>, Vec<f64>) = s.entries().iter().copied().unzip();
    a.select_scaled(&idx, &w)
}
