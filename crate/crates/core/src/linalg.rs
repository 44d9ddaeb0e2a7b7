//! Small dense helpers on symmetric matrices.

use alloc::vec::Vec;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{MeeError, Result};

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Eigenvalues of the symmetric part of `a`, ascending.
pub fn eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    if a.nrows() == 0 {
        return Vec::new();
    }
    let mut ev: Vec<f64> = SymmetricEigen::new(symmetrize(a)).eigenvalues.iter().cloned().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    eigenvalues(a).first().copied().unwrap_or(0.0)
}

pub fn max_eigenvalue(a: &DMatrix<f64>) -> f64 {
    eigenvalues(a).last().copied().unwrap_or(0.0)
}

/// Symmetric square root of a PSD matrix. Eigenvalues in `[-tol, 0)` are
/// clipped to zero; anything below `-tol` is rejected.
pub fn psd_sqrt(a: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(symmetrize(a));
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < -tol {
        return Err(MeeError::NotPositiveSemidefinite { min_eigenvalue: min });
    }
    let roots = eig.eigenvalues.map(|v| libm::sqrt(v.max(0.0)));
    let v = &eig.eigenvectors;
    Ok(v * DMatrix::from_diagonal(&roots) * v.transpose())
}

/// `a^{-1/2}` for a symmetric positive definite matrix.
pub fn inv_sqrt_spd(a: &DMatrix<f64>, min_eig: f64) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(symmetrize(a));
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min >= min_eig) {
        return Err(MeeError::SingularInformation { min_eigenvalue: min });
    }
    let roots = eig.eigenvalues.map(|v| 1.0 / libm::sqrt(v));
    let v = &eig.eigenvectors;
    Ok(v * DMatrix::from_diagonal(&roots) * v.transpose())
}

/// Lower `p`-quantile of a sample (inverse empirical distribution function).
pub fn quantile(samples: &[f64], p: f64) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let idx = libm::ceil(p * s.len() as f64) as usize;
    s[idx.clamp(1, s.len()) - 1]
}
