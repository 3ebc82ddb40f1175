//! Dense linear-algebra helpers shared by the numerical modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigendecomposition of a symmetric matrix with eigenvalues sorted in
/// descending order. Each eigenvector is signed so that its entry of largest
/// magnitude is positive, which makes the output deterministic.
pub fn sorted_symmetric_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let sym = symmetrize(m);
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = DVector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).into_owned();
        let lead = col.iamax();
        if col[lead] < 0.0 {
            col.neg_mut();
        }
        vectors.set_column(dst, &col);
    }
    (values, vectors)
}

/// Eigenvalues of a symmetric matrix in descending order.
pub fn sorted_symmetric_eigenvalues(m: &DMatrix<f64>) -> DVector<f64> {
    let mut values: Vec<f64> = symmetrize(m).symmetric_eigenvalues().iter().copied().collect();
    values.sort_by(|a, b| b.total_cmp(a));
    DVector::from_vec(values)
}

/// Returns `(m + mᵀ)/2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Column mean of a `dim × samples` matrix.
pub fn column_mean(x: &DMatrix<f64>) -> DVector<f64> {
    let n = x.ncols() as f64;
    x.column_sum() / n
}

/// Subtracts `mean` from every column.
pub fn center_columns(x: &DMatrix<f64>, mean: &DVector<f64>) -> DMatrix<f64> {
    let mut out = x.clone();
    for mut col in out.column_iter_mut() {
        col -= mean;
    }
    out
}

/// Empirical mean and unbiased covariance of the columns of `x`.
pub fn mean_and_covariance(x: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if x.ncols() < 2 {
        return Err(Error::InvalidData(format!(
            "covariance needs at least 2 samples, got {}",
            x.ncols()
        )));
    }
    let mean = column_mean(x);
    let xc = center_columns(x, &mean);
    let cov = (&xc * xc.transpose()) / (x.ncols() as f64 - 1.0);
    Ok((mean, symmetrize(&cov)))
}

/// Upper-triangular factor `U` with `m = UᵀU`.
pub fn upper_cholesky(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    nalgebra::Cholesky::new(symmetrize(m)).map(|c| c.l().transpose())
}

/// Inverse of a symmetric positive definite matrix.
pub fn spd_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    nalgebra::Cholesky::new(symmetrize(m)).map(|c| symmetrize(&c.inverse()))
}

/// `log Σ exp(v)` computed with the maximum subtracted.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Frobenius norm of `a - b`.
pub fn frobenius_distance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm()
}

/// Checks that every entry is finite, reporting the first offending entry.
pub fn ensure_finite(x: &DMatrix<f64>, what: &str) -> Result<()> {
    for (j, col) in x.column_iter().enumerate() {
        if let Some(k) = col.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!(
                "{what}: non-finite value in component {k}, column {j}"
            )));
        }
    }
    Ok(())
}
