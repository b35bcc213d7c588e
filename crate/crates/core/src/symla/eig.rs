use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::sym::{symmetrize, SymMatrix};
use crate::{Error, Result};

/// Spectral decomposition `m = Q·diag(values)·Qᵀ` with ascending eigenvalues.
#[derive(Clone, Debug)]
pub struct Eigen {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl Eigen {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let scaled = &self.vectors * DMatrix::from_diagonal(&self.values);
        symmetrize(&(scaled * self.vectors.transpose()))
    }
}

pub fn eigendecompose(m: &SymMatrix) -> Result<Eigen> {
    eigen_sorted(m.as_matrix())
}

/// Eigendecomposition of a raw matrix assumed symmetric.
pub(crate) fn eigen_sorted(m: &DMatrix<f64>) -> Result<Eigen> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("eigendecomposition of non-finite matrix".into()));
    }
    let n = m.nrows();
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(Eigen { values, vectors })
}

/// Frobenius-nearest positive semidefinite matrix (negative eigenvalues clipped).
pub fn project_psd(m: &SymMatrix) -> Result<SymMatrix> {
    let eig = eigendecompose(m)?;
    let n = m.dim();
    let neg = eig.values.iter().filter(|&&l| l < 0.0).count();
    if neg == 0 {
        return Ok(m.clone());
    }
    // Rebuild from whichever spectral part is smaller.
    let mut acc = DMatrix::zeros(n, n);
    if neg <= n - neg {
        for k in 0..neg {
            let q = eig.vectors.column(k);
            acc -= eig.values[k] * (q * q.transpose());
        }
        acc += m.as_matrix();
    } else {
        for k in neg..n {
            let q = eig.vectors.column(k);
            acc += eig.values[k] * (q * q.transpose());
        }
    }
    Ok(SymMatrix::new(symmetrize(&acc)).expect("projection of a valid matrix is valid"))
}

/// Largest eigenvalue of a symmetric matrix; `-inf` for an empty one.
pub fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::NEG_INFINITY;
    }
    if m.nrows() == 1 {
        return m[(0, 0)];
    }
    SymmetricEigen::new(symmetrize(m))
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Smallest eigenvalue of a symmetric matrix; `+inf` for an empty one.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    if m.nrows() == 1 {
        return m[(0, 0)];
    }
    SymmetricEigen::new(symmetrize(m))
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}
