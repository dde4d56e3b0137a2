//! Dense linear-algebra helpers shared by the estimators.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Relative threshold below which an eigenvalue is treated as zero by the
/// spectral pseudo-inverse.
pub const PINV_TOL: f64 = 1e-12;

/// Relative diagonal jitter used when a PD factorization fails once.
pub const FACTOR_JITTER: f64 = 1e-12;

pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Largest `|m[i,j] - m[j,i]|`.
pub(crate) fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub(crate) fn ensure_square(m: &DMatrix<f64>) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(m.nrows())
}

/// Symmetric eigendecomposition with eigenvalues in ascending order and each
/// eigenvector's first non-negligible component made positive.
pub(crate) fn sorted_symmetric_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = m.nrows();
    if n == 0 {
        return (DVector::zeros(0), DMatrix::zeros(0, 0));
    }
    let eig = symmetrize(m).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let mut values = DVector::zeros(n);
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        values[dst] = eig.eigenvalues[src];
        let mut col = eig.eigenvectors.column(src).into_owned();
        let scale = col.amax();
        if let Some(first) = col.iter().find(|v| v.abs() > 1e-10 * scale.max(1e-300)) {
            if *first < 0.0 {
                col.neg_mut();
            }
        }
        vectors.set_column(dst, &col);
    }
    (values, vectors)
}

/// `U g(Λ) Uᵀ` for a symmetric PSD matrix, where eigenvalues at or below
/// `PINV_TOL · λ_max` map to zero.
pub(crate) fn psd_spectral_fn(m: &DMatrix<f64>, g: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let (vals, vecs) = sorted_symmetric_eigen(m);
    let cutoff = PINV_TOL * vals.iter().fold(0.0f64, |a, &v| a.max(v));
    let mapped = DVector::from_iterator(
        vals.len(),
        vals.iter().map(|&v| if v > cutoff { g(v) } else { 0.0 }),
    );
    reconstruct(&vecs, &mapped)
}

/// `U diag(d) Uᵀ`.
pub(crate) fn reconstruct(vecs: &DMatrix<f64>, diag: &DVector<f64>) -> DMatrix<f64> {
    let mut scaled = vecs.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= diag[j];
    }
    symmetrize(&(scaled * vecs.transpose()))
}

pub(crate) fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    psd_spectral_fn(m, f64::sqrt)
}

pub(crate) fn psd_pinv_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    psd_spectral_fn(m, |v| 1.0 / v.sqrt())
}

/// Cholesky factor of a symmetric PD matrix. On failure the diagonal is
/// loaded with `FACTOR_JITTER · trace / n` and factorization retried once.
pub(crate) fn spd_factor(a: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    let n = ensure_square(a)?;
    let sym = symmetrize(a);
    if let Some(ch) = Cholesky::new(sym.clone()) {
        return Ok(ch);
    }
    let jitter = FACTOR_JITTER * sym.trace().abs() / n.max(1) as f64;
    if jitter > 0.0 && jitter.is_finite() {
        let mut loaded = sym;
        for i in 0..n {
            loaded[(i, i)] += jitter;
        }
        if let Some(ch) = Cholesky::new(loaded) {
            return Ok(ch);
        }
    }
    Err(Error::SingularSystem)
}

pub(crate) fn spd_solve_vec(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    Ok(spd_factor(a)?.solve(b))
}

/// Strict PD test: plain Cholesky, no jitter.
#[cfg(test)]
pub(crate) fn is_positive_definite(a: &DMatrix<f64>) -> bool {
    a.nrows() == a.ncols() && Cholesky::new(symmetrize(a)).is_some()
}

/// Column rank by singular values relative to the largest one.
pub(crate) fn column_rank(m: &DMatrix<f64>) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let top = sv.iter().fold(0.0f64, |a, &v| a.max(v));
    if top == 0.0 {
        return 0;
    }
    let tol = top * 1e-10 * m.nrows().max(m.ncols()) as f64;
    sv.iter().filter(|&&v| v > tol).count()
}
