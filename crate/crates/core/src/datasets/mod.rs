//! Dataset containers, affine scaling and CSV persistence.
//!
//! Matrices are stored column-per-sample: a training set of `N_d` samples of
//! `x = (q, w)` is an `n × N_d` matrix whose first `n_q` rows are the QoI block.

mod csv;

pub use csv::{read_matrix, read_matrix_csv, write_matrix, write_matrix_csv};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::ensure_finite;

/// Training samples of `(q, w)`, one column per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDataset {
    n_q: usize,
    n_w: usize,
    columns: DMatrix<f64>,
}

impl RawDataset {
    pub fn new(n_q: usize, n_w: usize, columns: DMatrix<f64>) -> Result<Self> {
        if n_q == 0 || n_w == 0 || n_q + n_w < 2 {
            return Err(Error::InvalidData(format!(
                "need n_q ≥ 1 and n_w ≥ 1, got n_q = {n_q}, n_w = {n_w}"
            )));
        }
        if columns.nrows() != n_q + n_w {
            return Err(Error::DimensionMismatch(format!(
                "dataset has {} rows, expected n_q + n_w = {}",
                columns.nrows(),
                n_q + n_w
            )));
        }
        if columns.ncols() < 2 {
            return Err(Error::InvalidData(format!(
                "need at least 2 samples, got {}",
                columns.ncols()
            )));
        }
        Ok(Self { n_q, n_w, columns })
    }

    /// Stacks a QoI block (`n_q × N_d`) on a parameter block (`n_w × N_d`).
    pub fn from_blocks(q: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<Self> {
        if q.ncols() != w.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "q block has {} samples, w block has {}",
                q.ncols(),
                w.ncols()
            )));
        }
        let mut columns = DMatrix::zeros(q.nrows() + w.nrows(), q.ncols());
        columns.rows_mut(0, q.nrows()).copy_from(q);
        columns.rows_mut(q.nrows(), w.nrows()).copy_from(w);
        Self::new(q.nrows(), w.nrows(), columns)
    }

    pub fn n_q(&self) -> usize {
        self.n_q
    }

    pub fn n_w(&self) -> usize {
        self.n_w
    }

    pub fn n(&self) -> usize {
        self.n_q + self.n_w
    }

    pub fn n_samples(&self) -> usize {
        self.columns.ncols()
    }

    pub fn columns(&self) -> &DMatrix<f64> {
        &self.columns
    }

    pub fn q_block(&self) -> DMatrix<f64> {
        self.columns.rows(0, self.n_q).into_owned()
    }

    pub fn w_block(&self) -> DMatrix<f64> {
        self.columns.rows(self.n_q, self.n_w).into_owned()
    }

    /// Keeps the first `count` samples.
    pub fn truncated(&self, count: usize) -> Result<Self> {
        if count > self.n_samples() {
            return Err(Error::InvalidData(format!(
                "cannot keep {count} of {} samples",
                self.n_samples()
            )));
        }
        Self::new(self.n_q, self.n_w, self.columns.columns(0, count).into_owned())
    }
}

/// Experimental QoI observations, one column per experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentalDataset {
    columns: DMatrix<f64>,
}

impl ExperimentalDataset {
    pub fn new(columns: DMatrix<f64>) -> Result<Self> {
        if columns.ncols() < 2 {
            return Err(Error::InvalidData(format!(
                "need at least 2 experimental realizations, got {}",
                columns.ncols()
            )));
        }
        ensure_finite(&columns, "experimental dataset")?;
        Ok(Self { columns })
    }

    pub fn n_q(&self) -> usize {
        self.columns.nrows()
    }

    pub fn n_r(&self) -> usize {
        self.columns.ncols()
    }

    pub fn columns(&self) -> &DMatrix<f64> {
        &self.columns
    }
}

/// Componentwise affine map `x̃ = (x − β) / α`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ScalingTransform {
    pub alpha: DVector<f64>,
    pub beta: DVector<f64>,
    pub n_q: usize,
    /// Components whose training range was zero (their `alpha` is 1).
    pub degenerate: Vec<usize>,
}

impl ScalingTransform {
    /// The identity transform on `n` components.
    pub fn identity(n: usize, n_q: usize) -> Self {
        Self {
            alpha: DVector::from_element(n, 1.0),
            beta: DVector::zeros(n),
            n_q,
            degenerate: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.alpha.len()
    }

    /// Restriction to the QoI block.
    pub fn q_part(&self) -> (DVector<f64>, DVector<f64>) {
        (
            self.alpha.rows(0, self.n_q).into_owned(),
            self.beta.rows(0, self.n_q).into_owned(),
        )
    }

    /// Restriction to the parameter block.
    pub fn w_part(&self) -> (DVector<f64>, DVector<f64>) {
        let n_w = self.n() - self.n_q;
        (
            self.alpha.rows(self.n_q, n_w).into_owned(),
            self.beta.rows(self.n_q, n_w).into_owned(),
        )
    }

    /// Scales full `n`-dimensional columns.
    pub fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        affine_forward(x, &self.alpha, &self.beta)
    }

    /// Inverts [`apply`](Self::apply).
    pub fn invert(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        affine_inverse(x, &self.alpha, &self.beta)
    }

    /// Maps scaled parameter columns back to original coordinates.
    pub fn invert_w(&self, w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let (alpha, beta) = self.w_part();
        affine_inverse(w, &alpha, &beta)
    }

    /// Scales parameter columns with the parameter block of the transform.
    pub fn apply_w(&self, w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let (alpha, beta) = self.w_part();
        affine_forward(w, &alpha, &beta)
    }
}

fn check_rows(x: &DMatrix<f64>, expected: usize) -> Result<()> {
    if x.nrows() != expected {
        return Err(Error::DimensionMismatch(format!(
            "matrix has {} rows, transform expects {expected}",
            x.nrows()
        )));
    }
    Ok(())
}

fn affine_forward(x: &DMatrix<f64>, alpha: &DVector<f64>, beta: &DVector<f64>) -> Result<DMatrix<f64>> {
    check_rows(x, alpha.len())?;
    Ok(DMatrix::from_fn(x.nrows(), x.ncols(), |k, j| {
        (x[(k, j)] - beta[k]) / alpha[k]
    }))
}

fn affine_inverse(x: &DMatrix<f64>, alpha: &DVector<f64>, beta: &DVector<f64>) -> Result<DMatrix<f64>> {
    check_rows(x, alpha.len())?;
    Ok(DMatrix::from_fn(x.nrows(), x.ncols(), |k, j| {
        alpha[k] * x[(k, j)] + beta[k]
    }))
}

/// Scaled training matrix together with the transform that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledDatasetBundle {
    pub columns: DMatrix<f64>,
    pub transform: ScalingTransform,
}

impl ScaledDatasetBundle {
    pub fn n_q(&self) -> usize {
        self.transform.n_q
    }

    pub fn q_block(&self) -> DMatrix<f64> {
        self.columns.rows(0, self.n_q()).into_owned()
    }

    pub fn w_block(&self) -> DMatrix<f64> {
        let n_w = self.columns.nrows() - self.n_q();
        self.columns.rows(self.n_q(), n_w).into_owned()
    }

    /// Recovers the original-coordinate training matrix.
    pub fn unscale(&self) -> Result<DMatrix<f64>> {
        self.transform.invert(&self.columns)
    }
}

/// Fits `α = max − min` and `β = min` per component.
pub fn fit_scaling(raw: &RawDataset) -> Result<ScalingTransform> {
    ensure_finite(raw.columns(), "training dataset")?;
    let n = raw.n();
    let mut alpha = DVector::zeros(n);
    let mut beta = DVector::zeros(n);
    let mut degenerate = Vec::new();
    for (k, row) in raw.columns().row_iter().enumerate() {
        let min = row.min();
        let max = row.max();
        beta[k] = min;
        if max > min {
            alpha[k] = max - min;
        } else {
            alpha[k] = 1.0;
            degenerate.push(k);
        }
    }
    if !degenerate.is_empty() {
        log::warn!(
            "{} degenerate component(s) with zero range, scale set to 1: {:?}",
            degenerate.len(),
            degenerate
        );
    }
    Ok(ScalingTransform {
        alpha,
        beta,
        n_q: raw.n_q(),
        degenerate,
    })
}

/// Applies `t` to the training set.
pub fn scale(raw: &RawDataset, t: &ScalingTransform) -> Result<ScaledDatasetBundle> {
    if t.n_q != raw.n_q() {
        return Err(Error::DimensionMismatch(format!(
            "transform splits at n_q = {}, dataset has n_q = {}",
            t.n_q,
            raw.n_q()
        )));
    }
    Ok(ScaledDatasetBundle {
        columns: t.apply(raw.columns())?,
        transform: t.clone(),
    })
}

/// Scales experimental QoI columns with the QoI block of `t`.
pub fn scale_experimental(exp: &ExperimentalDataset, t: &ScalingTransform) -> Result<DMatrix<f64>> {
    let (alpha, beta) = t.q_part();
    affine_forward(exp.columns(), &alpha, &beta)
}
