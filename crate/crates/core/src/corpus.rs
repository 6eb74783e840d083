//! Seeded test matrices with known leverage structure.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::matrix::SparseRowMatrix;
use crate::rng::stream;

fn normal_matrix(n: usize, d: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = stream(seed);
    DMatrix::from_fn(n, d, |_, _| rng.sample(StandardNormal))
}

fn from_dense(m: &DMatrix<f64>) -> SparseRowMatrix {
    SparseRowMatrix::from_dense(m).expect("generated entries are finite")
}

/// Dense `n × d` matrix of independent standard normals.
pub fn gaussian(n: usize, d: usize, seed: u64) -> SparseRowMatrix {
    from_dense(&normal_matrix(n, d, seed))
}

/// Gaussian rows scaled by `(i + 1)^(-exponent)`, so leverage decays
/// roughly like a power law from the first rows to the last.
pub fn power_law(n: usize, d: usize, seed: u64, exponent: f64) -> SparseRowMatrix {
    let mut m = normal_matrix(n, d, seed);
    for (i, mut row) in m.row_iter_mut().enumerate() {
        row *= ((i + 1) as f64).powf(-exponent);
    }
    from_dense(&m)
}

/// Random sparse matrix with about `density · d` nonzeros per row; every
/// row has at least one nonzero.
pub fn sparse_gaussian(n: usize, d: usize, density: f64, seed: u64) -> SparseRowMatrix {
    let mut rng = stream(seed);
    let mut trip = Vec::new();
    for i in 0..n {
        let forced = rng.random_range(0..d);
        for j in 0..d {
            if j == forced || rng.random::<f64>() < density {
                trip.push((i, j, rng.sample::<f64, _>(StandardNormal)));
            }
        }
    }
    SparseRowMatrix::from_triplets(n, d, trip).expect("valid triplets")
}

/// `k` stacked copies of the `d × d` identity; every score is `1/k`.
pub fn stacked_identity(k: usize, d: usize) -> SparseRowMatrix {
    let trip = (0..k * d).map(|i| (i, i % d, 1.0));
    SparseRowMatrix::from_triplets(k * d, d, trip).expect("valid triplets")
}

/// Gaussian entries in the first `d − 1` columns and a single row, at
/// position `at`, equal to the last unit vector. That row has leverage 1
/// and dropping it lowers the rank.
pub fn isolated_direction(n: usize, d: usize, at: usize, seed: u64) -> SparseRowMatrix {
    assert!(d >= 2 && at < n);
    let mut m = normal_matrix(n, d, seed);
    m.column_mut(d - 1).fill(0.0);
    m.row_mut(at).fill(0.0);
    m[(at, d - 1)] = 1.0;
    from_dense(&m)
}

/// `U Σ Vᵀ` with orthonormal `U`, `V` and singular values spaced
/// geometrically from 1 down to `1/cond`.
pub fn ill_conditioned(n: usize, d: usize, cond: f64, seed: u64) -> SparseRowMatrix {
    assert!(n >= d && d >= 1);
    let u = normal_matrix(n, d, seed).qr().q();
    let v = normal_matrix(d, d, seed ^ 0x5bd1_e995).qr().q();
    let sig = DVector::from_fn(d, |j, _| {
        if d == 1 {
            1.0
        } else {
            cond.powf(-(j as f64) / (d - 1) as f64)
        }
    });
    let m = u * DMatrix::from_diagonal(&sig) * v.transpose();
    from_dense(&m)
}
