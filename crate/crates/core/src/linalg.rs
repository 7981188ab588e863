//! Thin wrappers over nalgebra decompositions.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::tensor_io::{rng::standard_normals, DenseMatrix, StreamRng};

/// First `k` columns of a Haar-distributed `dim × dim` orthogonal matrix:
/// QR of a Gaussian matrix with each column of Q multiplied by sign(R_jj).
pub fn haar_frame(dim: usize, k: usize, rng: &mut StreamRng) -> DMatrix<f64> {
    let g = DMatrix::from_row_slice(dim, k, &standard_normals(rng, dim * k));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..k {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

pub fn haar_orthogonal(dim: usize, rng: &mut StreamRng) -> DenseMatrix {
    DenseMatrix::from_nalgebra(&haar_frame(dim, dim, rng))
}

/// Singular values in descending order.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let mut sv: Vec<f64> = m.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

pub fn min_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}
