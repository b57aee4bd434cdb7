//! Dense matrices and the symmetric eigensolver.

mod eigen;
mod matrix;

pub use eigen::{symmetric_eigen, EigenDecomposition};
pub use matrix::{matmul, row_softmax, Matrix};
