use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::spectral::jacobi_eigen;

/// Factor M ≈ UᵀU of a PSD matrix, keeping eigenpairs with λ > `rank_tol` ·
/// max(1, λ_max). Row k of U is √λ_k v_kᵀ, so column l of U is the Gram vector
/// of index l. Eigenvalues below −`rank_tol` · max(1, λ_max) are a domain
/// error.
pub fn gram_factor(m: &DMatrix<f64>, rank_tol: f64) -> Result<DMatrix<f64>> {
    let eig = jacobi_eigen(m, true)?;
    let vectors = eig.vectors.expect("vectors requested");
    let n = m.nrows();
    let scale = eig.values.last().copied().unwrap_or(0.0).max(1.0);
    if let Some(&lmin) = eig.values.first() {
        if lmin < -rank_tol * scale {
            return Err(Error::Domain(format!("Gram input is indefinite (λ_min = {lmin:e})")));
        }
    }
    let kept: Vec<usize> = (0..n).rev().filter(|&k| eig.values[k] > rank_tol * scale).collect();
    Ok(DMatrix::from_fn(kept.len(), n, |r, c| {
        let k = kept[r];
        eig.values[k].sqrt() * vectors[(c, k)]
    }))
}
