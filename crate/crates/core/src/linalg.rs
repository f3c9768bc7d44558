//! Small dense helpers shared by the estimators.

use nalgebra::{DMatrix, DVector};

/// Relative eigenvalue slack accepted when testing positive semidefiniteness.
pub const PSD_SLACK: f64 = 1e-10;

/// True when `m` is square, symmetric (to round-off) and its smallest
/// eigenvalue is at least `-PSD_SLACK * largest`.
pub fn is_symmetric_psd(m: &DMatrix<f64>) -> bool {
    if !m.is_square() {
        return false;
    }
    if m.nrows() == 0 {
        return true;
    }
    let scale = m.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if !scale.is_finite() {
        return false;
    }
    if (m - m.transpose()).amax() > 1e-12 * scale.max(f64::MIN_POSITIVE) {
        return false;
    }
    let eig = m.clone().symmetric_eigenvalues();
    let max = eig.max();
    let min = eig.min();
    min >= -PSD_SLACK * max.abs().max(0.0)
}

/// A factor `L` with `L Lᵀ = m` for a symmetric PSD `m`. Negative round-off
/// eigenvalues are clamped to zero.
pub fn psd_factor(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    if m.iter().all(|v| *v == 0.0) {
        return DMatrix::zeros(n, n);
    }
    if let Some(chol) = m.clone().cholesky() {
        return chol.l();
    }
    let eig = m.clone().symmetric_eigen();
    let mut l = eig.eigenvectors.clone();
    for (j, lambda) in eig.eigenvalues.iter().enumerate() {
        let s = lambda.max(0.0).sqrt();
        l.column_mut(j).scale_mut(s);
    }
    l
}

/// Moore–Penrose pseudoinverse of a symmetric PSD matrix together with a flag
/// telling whether it was (numerically) singular.
pub fn symmetric_pinv(m: &DMatrix<f64>, rel_tol: f64) -> (DMatrix<f64>, bool) {
    let n = m.nrows();
    if n == 0 {
        return (DMatrix::zeros(0, 0), false);
    }
    let eig = m.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let cutoff = rel_tol * max;
    let mut singular = max == 0.0;
    let mut out = DMatrix::zeros(n, n);
    for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda <= cutoff || lambda <= 0.0 {
            singular = true;
            continue;
        }
        let v = eig.eigenvectors.column(j);
        out += (&v * v.transpose()) / lambda;
    }
    (symmetrize(out), singular)
}

pub fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// `vᵀ M v`, accumulated row by row in index order.
pub fn quad_form(v: &[f64], m: &DMatrix<f64>) -> f64 {
    debug_assert_eq!(v.len(), m.nrows());
    let mut acc = 0.0;
    for i in 0..v.len() {
        let mut row = 0.0;
        for j in 0..v.len() {
            row += m[(i, j)] * v[j];
        }
        acc += v[i] * row;
    }
    acc
}

/// Restriction of a symmetric matrix to `idx × idx`.
pub fn restrict(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |i, j| m[(idx[i], idx[j])])
}

/// Adds a zero leading row and column (the intercept slot).
pub fn pad_intercept(m: &DMatrix<f64>) -> DMatrix<f64> {
    let s = m.nrows();
    let mut out = DMatrix::zeros(s + 1, s + 1);
    out.view_mut((1, 1), (s, s)).copy_from(m);
    out
}

/// Prepends a leading one.
pub fn with_intercept(x: &[f64]) -> DVector<f64> {
    let mut v = DVector::zeros(x.len() + 1);
    v[0] = 1.0;
    v.rows_mut(1, x.len()).copy_from_slice(x);
    v
}

pub fn trace(m: &DMatrix<f64>) -> f64 {
    m.diagonal().iter().sum()
}
