//! Small dense helpers shared by the numeric modules.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Solves `m x = rhs` by LU with partial pivoting.
pub fn solve(m: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    if !m.is_square() || m.nrows() != rhs.len() {
        return Err(Error::Dimension(format!(
            "solve: matrix {}x{} with rhs of length {}",
            m.nrows(),
            m.ncols(),
            rhs.len()
        )));
    }
    m.clone()
        .lu()
        .solve(rhs)
        .ok_or_else(|| Error::Numerical("singular system".into()))
}

/// Inverse of a square matrix by LU.
pub fn inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !m.is_square() {
        return Err(Error::Dimension(format!("inverse of {}x{} matrix", m.nrows(), m.ncols())));
    }
    m.clone()
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("singular matrix".into()))
}

/// Singular values sorted in decreasing order.
pub fn singular_values_desc(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Induced 2-norm.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    singular_values_desc(m).first().copied().unwrap_or(0.0)
}

/// Eigenvalues of the symmetric part `(m + mᵀ)/2`, increasing.
pub fn symmetric_part_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let mut ev: Vec<f64> = sym.symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// `√(Σ π(i) x(i)²)`.
pub fn weighted_norm_raw(x: &[f64], pi: &[f64]) -> f64 {
    x.iter().zip(pi).map(|(xi, p)| p * xi * xi).sum::<f64>().sqrt()
}

/// Formats a float with 17 significant digits, the precision used for every
/// numeric field this crate writes.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Returns `true` when every entry is finite.
pub fn all_finite<'a>(xs: impl IntoIterator<Item = &'a f64>) -> bool {
    xs.into_iter().all(|x| x.is_finite())
}
