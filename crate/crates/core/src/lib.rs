//! Spectral approximation of tall sparse matrices by row sampling.
//!
//! The crate computes exact and approximate leverage scores, samples and
//! reweights rows, and chains these into pipelines that return a small
//! reweighted subset `Ã` of the rows of `A` with
//! `(1/λ)‖Ax‖² ≤ ‖Ãx‖² ≤ ‖Ax‖²` for every `x`. Dense `d × d` oracles for
//! checking such guarantees live in [`verify`].

// `!(x > 0.0)` is used on purpose so that NaN arguments are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod config;
pub mod corpus;
pub mod error;
pub mod fast;
pub mod instrument;
pub mod leverage;
pub mod matrix;
pub mod pipelines;
pub mod reweight;
pub mod rng;
pub mod sampling;
pub mod verify;

pub use config::SketchConfig;
pub use error::{Error, Result};
pub use leverage::{Score, ScoreVector};
pub use matrix::{DenseVector, SparseRowMatrix, WeightedRowSample};
