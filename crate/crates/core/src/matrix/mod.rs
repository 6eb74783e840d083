//! Sparse row storage, row samples, and their file formats.

mod market;
mod sample;
mod sparse;
mod vector;

pub use market::{read_matrix_market, write_matrix_market};
pub use sample::{read_sample, write_sample, WeightedRowSample};
pub use sparse::{gram, materialize_sample, RowView, SparseRowMatrix};
pub use vector::{read_vector, write_vector, DenseVector};
