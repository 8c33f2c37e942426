//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// `A^{-1/2}` of a symmetric positive-definite matrix via eigendecomposition.
pub fn inverse_sqrt_spd(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(symmetrize(a));
    let scale = eig.eigenvalues.amax().max(f64::MIN_POSITIVE);
    if eig.eigenvalues.iter().any(|&l| !(l > 1e-14 * scale)) {
        return Err(Error::NotPositiveDefinite);
    }
    let d = eig.eigenvalues.map(|l| 1.0 / l.sqrt());
    let q = &eig.eigenvectors;
    Ok(q * DMatrix::from_diagonal(&d) * q.transpose())
}

/// `A^{1/2}` of a symmetric positive-semidefinite matrix; negative
/// eigenvalues from round-off are clipped at zero.
pub fn sqrt_psd(a: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(symmetrize(a));
    let d = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let q = &eig.eigenvectors;
    q * DMatrix::from_diagonal(&d) * q.transpose()
}

/// Projection onto the PSD cone (eigenvalue clipping). Returns the projected
/// matrix and whether any eigenvalue had to be clipped.
pub fn nearest_psd(a: &DMatrix<f64>) -> (DMatrix<f64>, bool) {
    let eig = SymmetricEigen::new(symmetrize(a));
    let clipped = eig.eigenvalues.iter().any(|&l| l < 0.0);
    if !clipped {
        return (symmetrize(a), false);
    }
    let d = eig.eigenvalues.map(|l| l.max(0.0));
    let q = &eig.eigenvectors;
    (q * DMatrix::from_diagonal(&d) * q.transpose(), true)
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Columns of `x` listed in `cols`, in that order.
pub fn select_columns(x: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), cols.len(), |i, k| x[(i, cols[k])])
}

pub fn select_rows(x: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), x.ncols(), |k, j| x[(rows[k], j)])
}

pub fn select_entries(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]))
}

/// Scatter `values` (indexed by `idx`) into a zero vector of length `p`.
pub fn scatter(p: usize, idx: &[usize], values: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(p);
    for (k, &i) in idx.iter().enumerate() {
        out[i] = values[k];
    }
    out
}
