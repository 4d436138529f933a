//! Small dense linear-algebra helpers shared by the filter and fitting code.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Default relative cutoff for truncated-SVD pseudo-inverses.
pub const PINV_RCOND: f64 = 1e-10;

/// Negative eigenvalues below `-PSD_TOL * ||C||` are treated as a genuine failure.
pub const PSD_TOL: f64 = 1e-12;

/// Truncated-SVD pseudo-inverse. Singular values below `rcond * s_max` are dropped.
/// The flag reports whether any nonzero-dimension direction was truncated.
pub fn pinv(a: &DMatrix<f64>, rcond: f64) -> (DMatrix<f64>, bool) {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return (DMatrix::zeros(n, m), false);
    }
    let svd = a.clone().svd(true, true);
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    let s = &svd.singular_values;
    let s_max = s.iter().cloned().fold(0.0, f64::max);
    let cut = rcond * s_max;
    let mut out = DMatrix::zeros(n, m);
    let mut truncated = false;
    for k in 0..s.len() {
        if s[k] > cut && s[k] > 0.0 {
            let vk = v_t.row(k).transpose();
            let uk = u.column(k);
            out += (vk / s[k]) * uk.transpose();
        } else {
            truncated = true;
        }
    }
    (out, truncated)
}

pub fn symmetrize(c: &DMatrix<f64>) -> DMatrix<f64> {
    (c + c.transpose()) * 0.5
}

/// Symmetrize and clamp small negative eigenvalues to zero.
///
/// Returns the repaired matrix and whether any clamping happened. Eigenvalues below
/// `-PSD_TOL * ||C||_2` are an error.
pub fn psd_repair(c: &DMatrix<f64>) -> Result<(DMatrix<f64>, bool)> {
    if c.nrows() != c.ncols() {
        return Err(Error::dim("square covariance", c.nrows(), c.ncols()));
    }
    let s = symmetrize(c);
    if s.nrows() == 0 {
        return Ok((s, false));
    }
    let eig = s.clone().symmetric_eigen();
    let norm = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let min_eig = eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if min_eig >= 0.0 {
        return Ok((s, false));
    }
    if min_eig < -PSD_TOL * norm {
        return Err(Error::NotPsd { min_eig, norm });
    }
    let clamped = eig.eigenvalues.map(|v| v.max(0.0));
    let v = &eig.eigenvectors;
    let r = v * DMatrix::from_diagonal(&clamped) * v.transpose();
    Ok((symmetrize(&r), true))
}

/// Check symmetry and PSD-ness within a relative tolerance.
pub fn is_sym_psd(c: &DMatrix<f64>, rel_tol: f64) -> bool {
    if c.nrows() != c.ncols() {
        return false;
    }
    let norm = c.norm().max(f64::MIN_POSITIVE);
    if (c - c.transpose()).norm() > rel_tol * norm {
        return false;
    }
    let eig = symmetrize(c).symmetric_eigen();
    eig.eigenvalues.iter().all(|&v| v >= -rel_tol * norm)
}

/// A square-root factor `L` with `L Lᵀ = C` for a PSD matrix.
/// Uses Cholesky when possible and an eigen-decomposition otherwise.
pub fn sqrt_factor(c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (s, _) = psd_repair(c)?;
    if let Some(ch) = s.clone().cholesky() {
        return Ok(ch.l());
    }
    let eig = s.symmetric_eigen();
    let sq = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&sq))
}

/// Column means of a sample matrix (rows are samples).
pub fn column_mean(samples: &DMatrix<f64>) -> DVector<f64> {
    let n = samples.nrows().max(1) as f64;
    DVector::from_iterator(samples.ncols(), samples.column_iter().map(|c| c.sum() / n))
}

/// Unbiased sample covariance of the columns of `samples`.
pub fn sample_cov(samples: &DMatrix<f64>) -> DMatrix<f64> {
    let n = samples.nrows();
    let mean = column_mean(samples);
    let mut centered = samples.clone();
    for (j, mut col) in centered.column_iter_mut().enumerate() {
        col.add_scalar_mut(-mean[j]);
    }
    let denom = (n.max(2) - 1) as f64;
    centered.transpose() * centered / denom
}

/// Relative Frobenius error `||a - b|| / ||b||`.
pub fn rel_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pinv_of_invertible_is_inverse() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let (p, trunc) = pinv(&a, PINV_RCOND);
        assert!(!trunc);
        let inv = a.clone().try_inverse().unwrap();
        assert!((p - inv).norm() < 1e-12);
    }

    #[test]
    fn pinv_truncates_rank_deficient() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let (p, trunc) = pinv(&a, PINV_RCOND);
        assert!(trunc);
        let expect = DMatrix::from_element(2, 2, 0.25);
        assert!((p - expect).norm() < 1e-12);
    }

    #[test]
    fn psd_repair_clamps_tiny_negative() {
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0 - 1e-15]);
        let (r, _) = psd_repair(&c).unwrap();
        assert!(is_sym_psd(&r, 1e-12));
    }

    #[test]
    fn psd_repair_rejects_indefinite() {
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -0.5]);
        assert!(psd_repair(&c).is_err());
    }

    #[test]
    fn sqrt_factor_reproduces_singular_matrix() {
        let c = DMatrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 1.0]);
        let l = sqrt_factor(&c).unwrap();
        assert!((&l * l.transpose() - c).norm() < 1e-12);
    }
}
