use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{center_columns, column_mean, sorted_symmetric_eigen, symmetrize};

/// Default relative eigenvalue cutoff.
pub const DEFAULT_PCA_TOL: f64 = 1e-12;

/// Whitening map `η = λ^{-1/2} φᵀ (x − x̄)` of the scaled training set.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaNormalization {
    pub mean: DVector<f64>,
    pub eigvals: DVector<f64>,
    pub eigvecs: DMatrix<f64>,
}

impl PcaNormalization {
    pub fn nu_x(&self) -> usize {
        self.eigvals.len()
    }

    /// `η = λ^{-1/2} φᵀ (x − x̄)` for every column.
    pub fn normalize(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.nrows() != self.mean.len() {
            return Err(Error::DimensionMismatch(format!(
                "expected {} rows, got {}",
                self.mean.len(),
                x.nrows()
            )));
        }
        let mut eta = self.eigvecs.transpose() * center_columns(x, &self.mean);
        for (mut row, &l) in eta.row_iter_mut().zip(self.eigvals.iter()) {
            row /= l.sqrt();
        }
        Ok(eta)
    }

    /// `x = x̄ + φ λ^{1/2} η` for every column.
    pub fn denormalize(&self, eta: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if eta.nrows() != self.nu_x() {
            return Err(Error::DimensionMismatch(format!(
                "expected {} rows, got {}",
                self.nu_x(),
                eta.nrows()
            )));
        }
        let mut scaled = eta.clone();
        for (mut row, &l) in scaled.row_iter_mut().zip(self.eigvals.iter()) {
            row *= l.sqrt();
        }
        let mut x = &self.eigvecs * scaled;
        for mut col in x.column_iter_mut() {
            col += &self.mean;
        }
        Ok(x)
    }
}

/// PCA of the scaled training columns `x` (`n × N_d`), dropping eigenvalues
/// below `tol · λ_max`. Returns the normalization and `η_d` (`ν_x × N_d`).
///
/// When `n > N_d` the eigenproblem is solved on the `N_d × N_d` Gram matrix.
pub fn pca_normalize(x: &DMatrix<f64>, tol: f64) -> Result<(PcaNormalization, DMatrix<f64>)> {
    let (n, n_d) = x.shape();
    if n_d < 2 {
        return Err(Error::InvalidData(format!("PCA needs at least 2 samples, got {n_d}")));
    }
    let mean = column_mean(x);
    let xc = center_columns(x, &mean);
    let denom = n_d as f64 - 1.0;
    let (eigvals, eigvecs) = if n <= n_d {
        let cov = symmetrize(&(&xc * xc.transpose())) / denom;
        let (vals, vecs) = sorted_symmetric_eigen(&cov);
        let keep = retained(&vals, tol)?;
        (vals.rows(0, keep).into_owned(), vecs.columns(0, keep).into_owned())
    } else {
        let gram = symmetrize(&(xc.transpose() * &xc)) / denom;
        let (vals, vecs) = sorted_symmetric_eigen(&gram);
        let keep = retained(&vals, tol)?;
        let mut phi = &xc * vecs.columns(0, keep);
        for (k, mut col) in phi.column_iter_mut().enumerate() {
            col /= (denom * vals[k]).sqrt();
            let norm = col.norm();
            col /= norm;
            let lead = col.iamax();
            if col[lead] < 0.0 {
                col.neg_mut();
            }
        }
        (vals.rows(0, keep).into_owned(), phi)
    };
    let norm = PcaNormalization {
        mean,
        eigvals,
        eigvecs,
    };
    let eta = norm.normalize(x)?;
    Ok((norm, eta))
}

fn retained(vals: &DVector<f64>, tol: f64) -> Result<usize> {
    let max = vals[0];
    if max <= 0.0 {
        return Err(Error::InvalidData("constant dataset: all PCA eigenvalues are zero".into()));
    }
    let keep = vals.iter().take_while(|&&v| v > tol * max).count();
    Ok(keep)
}
