//! Separate PCA reductions of the learned QoI and parameter blocks.
//!
//! Each block `y` is represented as `ȳ + φ μ^{1/2} ŷ`, with `ν` chosen as the
//! smallest order whose relative L² error `err(ν) = 1 − Σ_{α≤ν} μ_α / tr C`
//! meets the threshold. The reduced coordinates `ŷ` are white over the
//! learned set.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{center_columns, mean_and_covariance, sorted_symmetric_eigen};

/// Default error threshold for both blocks.
pub const DEFAULT_EPS_REDUCTION: f64 = 1e-4;

/// PCA of one block.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BlockPca {
    pub mean: DVector<f64>,
    /// Retained eigenvalues `μ`, descending and positive.
    pub eigvals: DVector<f64>,
    /// Retained eigenvectors `φ` (`dim × ν`).
    pub eigvecs: DMatrix<f64>,
    /// Achieved relative error `err(ν)`.
    pub err: f64,
    /// Trace of the block covariance.
    pub trace: f64,
    /// Full covariance spectrum, descending.
    pub spectrum: DVector<f64>,
}

impl BlockPca {
    pub fn nu(&self) -> usize {
        self.eigvals.len()
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `err(k)` for any order `k` up to the block dimension.
    pub fn err_at(&self, k: usize) -> f64 {
        tail_error(&self.spectrum, self.trace, k)
    }

    /// `ŷ = μ^{-1/2} φᵀ (y − ȳ)` for every column.
    pub fn project(&self, samples: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if samples.nrows() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "block PCA expects {} rows, got {}",
                self.dim(),
                samples.nrows()
            )));
        }
        let mut out = self.eigvecs.transpose() * center_columns(samples, &self.mean);
        for (mut row, &mu) in out.row_iter_mut().zip(self.eigvals.iter()) {
            row /= mu.sqrt();
        }
        Ok(out)
    }

    /// `y = ȳ + φ μ^{1/2} ŷ` for every column.
    pub fn reconstruct(&self, reduced: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if reduced.nrows() != self.nu() {
            return Err(Error::DimensionMismatch(format!(
                "reduced coordinates need {} rows, got {}",
                self.nu(),
                reduced.nrows()
            )));
        }
        let mut scaled = reduced.clone();
        for (mut row, &mu) in scaled.row_iter_mut().zip(self.eigvals.iter()) {
            row *= mu.sqrt();
        }
        let mut out = &self.eigvecs * scaled;
        for mut col in out.column_iter_mut() {
            col += &self.mean;
        }
        Ok(out)
    }
}

fn tail_error(spectrum: &DVector<f64>, trace: f64, k: usize) -> f64 {
    spectrum.iter().skip(k).map(|&m| m.max(0.0)).sum::<f64>() / trace
}

/// Fits the PCA of the columns of `samples`.
pub fn fit_block_pca(samples: &DMatrix<f64>, eps_threshold: f64) -> Result<BlockPca> {
    let (mean, cov) = mean_and_covariance(samples)?;
    block_pca_from_covariance(mean, &cov, eps_threshold)
}

/// Builds the block PCA from a mean and covariance.
pub fn block_pca_from_covariance(mean: DVector<f64>, cov: &DMatrix<f64>, eps_threshold: f64) -> Result<BlockPca> {
    if !(eps_threshold > 0.0 && eps_threshold < 1.0) {
        return Err(Error::Config(format!(
            "PCA error threshold must lie in (0, 1), got {eps_threshold}"
        )));
    }
    let trace = cov.trace();
    if !(trace > 0.0) {
        return Err(Error::InvalidData("block covariance has zero trace".into()));
    }
    let (spectrum, vecs) = sorted_symmetric_eigen(cov);
    let nu = (1..=spectrum.len())
        .find(|&k| spectrum[k - 1] > 0.0 && tail_error(&spectrum, trace, k) <= eps_threshold)
        .ok_or_else(|| Error::Numerical("PCA error threshold unreachable".into()))?;
    Ok(BlockPca {
        mean,
        eigvals: spectrum.rows(0, nu).into_owned(),
        eigvecs: vecs.columns(0, nu).into_owned(),
        err: tail_error(&spectrum, trace, nu),
        trace,
        spectrum,
    })
}

/// Reduced learned realizations `x̂ = (q̂, ŵ)`, one column each.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedLearnedDataset {
    pub nu_q: usize,
    pub nu_w: usize,
    pub columns: DMatrix<f64>,
}

impl ReducedLearnedDataset {
    pub fn new(nu_q: usize, nu_w: usize, columns: DMatrix<f64>) -> Result<Self> {
        if columns.nrows() != nu_q + nu_w || nu_q == 0 || nu_w == 0 {
            return Err(Error::DimensionMismatch(format!(
                "reduced dataset has {} rows, expected ν_q + ν_w = {} + {}",
                columns.nrows(),
                nu_q,
                nu_w
            )));
        }
        Ok(Self { nu_q, nu_w, columns })
    }

    pub fn nu(&self) -> usize {
        self.nu_q + self.nu_w
    }

    pub fn nu_ar(&self) -> usize {
        self.columns.ncols()
    }

    pub fn q_block(&self) -> DMatrix<f64> {
        self.columns.rows(0, self.nu_q).into_owned()
    }

    pub fn w_block(&self) -> DMatrix<f64> {
        self.columns.rows(self.nu_q, self.nu_w).into_owned()
    }
}

/// Reduced experimental QoI `q̂^{exper,r}`, one column each.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedExperimental {
    pub columns: DMatrix<f64>,
}

impl ReducedExperimental {
    pub fn n_r(&self) -> usize {
        self.columns.ncols()
    }

    /// Mean over the experiments.
    pub fn mean(&self) -> DVector<f64> {
        crate::linalg::column_mean(&self.columns)
    }
}

/// Projects scaled experimental QoI columns with the QoI-block PCA.
pub fn project_experimental(pca_q: &BlockPca, exp_scaled: &DMatrix<f64>) -> Result<ReducedExperimental> {
    let columns = pca_q.project(exp_scaled)?;
    crate::linalg::ensure_finite(&columns, "reduced experimental data")?;
    Ok(ReducedExperimental { columns })
}

/// Both block reductions and the reduced learned dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedModel {
    pub pca_q: BlockPca,
    pub pca_w: BlockPca,
    pub learned: ReducedLearnedDataset,
}

/// Reduces the scaled learned realizations (`n × ν_ar`, QoI block first).
pub fn reduce(learned: &DMatrix<f64>, n_q: usize, eps_q: f64, eps_w: f64) -> Result<ReducedModel> {
    let n_w = learned
        .nrows()
        .checked_sub(n_q)
        .filter(|&n_w| n_w > 0 && n_q > 0)
        .ok_or_else(|| Error::DimensionMismatch(format!("cannot split {} rows at n_q = {n_q}", learned.nrows())))?;
    let q = learned.rows(0, n_q).into_owned();
    let w = learned.rows(n_q, n_w).into_owned();
    let pca_q = fit_block_pca(&q, eps_q)?;
    let pca_w = fit_block_pca(&w, eps_w)?;
    let q_hat = pca_q.project(&q)?;
    let w_hat = pca_w.project(&w)?;
    let mut columns = DMatrix::zeros(pca_q.nu() + pca_w.nu(), learned.ncols());
    columns.rows_mut(0, pca_q.nu()).copy_from(&q_hat);
    columns.rows_mut(pca_q.nu(), pca_w.nu()).copy_from(&w_hat);
    let learned = ReducedLearnedDataset::new(pca_q.nu(), pca_w.nu(), columns)?;
    Ok(ReducedModel { pca_q, pca_w, learned })
}

/// Deviation of a block from zero mean and identity covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WhiteningReport {
    pub mean_norm: f64,
    pub cov_deviation: f64,
}

impl WhiteningReport {
    /// Mean-norm below 1e-10 and `‖cov − I‖_F` below 1e-8.
    pub fn passes(&self) -> bool {
        self.mean_norm < 1e-10 && self.cov_deviation < 1e-8
    }
}

/// Measures the whitening of a block of reduced columns.
pub fn whitening_report(block: &DMatrix<f64>) -> Result<WhiteningReport> {
    let (mean, cov) = mean_and_covariance(block)?;
    let nu = block.nrows();
    Ok(WhiteningReport {
        mean_norm: mean.norm(),
        cov_deviation: (cov - DMatrix::identity(nu, nu)).norm(),
    })
}

/// Joint error of the two block representations and its upper bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CombinedError {
    pub err_x: f64,
    pub bound: f64,
    pub holds: bool,
}

/// `err_X = err_Q/(1 + tr C_W/tr C_Q) + err_W/(1 + tr C_Q/tr C_W)`, which never
/// exceeds `err_Q + err_W`.
pub fn combined_error(err_q: f64, err_w: f64, trace_q: f64, trace_w: f64) -> Result<CombinedError> {
    if !(trace_q > 0.0 && trace_w > 0.0) {
        return Err(Error::InvalidData(format!(
            "traces must be positive, got {trace_q} and {trace_w}"
        )));
    }
    let err_x = err_q / (1.0 + trace_w / trace_q) + err_w / (1.0 + trace_q / trace_w);
    let bound = err_q + err_w;
    Ok(CombinedError {
        err_x,
        bound,
        holds: err_x <= bound,
    })
}
