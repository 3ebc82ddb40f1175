use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

/// Silverman bandwidth `(4 / (N (2 + ν)))^{1/(ν+4)}`.
pub fn silverman_bandwidth(dim: usize, samples: usize) -> f64 {
    let nu = dim as f64;
    (4.0 / (samples as f64 * (2.0 + nu))).powf(1.0 / (nu + 4.0))
}

/// Modified bandwidth pair `(ŝ, s)` with `ŝ = s / √(s² + (N−1)/N)`.
pub fn modified_silverman(dim: usize, samples: usize) -> (f64, f64) {
    let s = silverman_bandwidth(dim, samples);
    let n = samples as f64;
    (s / (s * s + (n - 1.0) / n).sqrt(), s)
}

/// Gaussian mixture with centers `(ŝ/s) η^j` and covariance `ŝ² I`.
#[derive(Debug, Clone)]
pub struct LearningDensity {
    centers: DMatrix<f64>,
    s_hat: f64,
}

impl LearningDensity {
    pub fn new(eta: &DMatrix<f64>) -> Self {
        let (s_hat, s) = modified_silverman(eta.nrows(), eta.ncols());
        Self {
            centers: eta * (s_hat / s),
            s_hat,
        }
    }

    pub fn s_hat(&self) -> f64 {
        self.s_hat
    }

    fn exponents(&self, u: &[f64], out: &mut Vec<f64>) {
        let inv = 1.0 / (2.0 * self.s_hat * self.s_hat);
        out.clear();
        out.extend(self.centers.column_iter().map(|c| {
            let d2: f64 = c.iter().zip(u).map(|(a, b)| (a - b) * (a - b)).sum();
            -d2 * inv
        }));
    }

    /// `log p(u)` up to the additive constant of the Gaussian normalization.
    pub fn log_density_unnorm(&self, u: &DVector<f64>) -> f64 {
        let mut e = Vec::new();
        self.exponents(u.as_slice(), &mut e);
        crate::linalg::log_sum_exp(&e) - (self.centers.ncols() as f64).ln()
    }

    /// `∇ log p(u)` for one point.
    pub fn score(&self, u: &[f64], scratch: &mut Vec<f64>) -> Vec<f64> {
        self.exponents(u, scratch);
        let max = scratch.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let dim = u.len();
        let mut acc = vec![0.0; dim];
        let mut total = 0.0;
        for (c, &e) in self.centers.column_iter().zip(scratch.iter()) {
            let w = (e - max).exp();
            total += w;
            for k in 0..dim {
                acc[k] += w * c[k];
            }
        }
        let inv = 1.0 / (self.s_hat * self.s_hat);
        (0..dim).map(|k| inv * (acc[k] / total - u[k])).collect()
    }

    /// Column-wise score of a `ν × N` state.
    pub fn drift(&self, u: &DMatrix<f64>) -> DMatrix<f64> {
        let cols: Vec<Vec<f64>> = (0..u.ncols())
            .into_par_iter()
            .map_init(Vec::new, |scratch, j| self.score(u.column(j).as_slice(), scratch))
            .collect();
        DMatrix::from_fn(u.nrows(), u.ncols(), |k, j| cols[j][k])
    }
}

/// Drift `L(u) = ∇ log p(u)` of the learning density built on `eta`.
pub fn learning_drift(u: &DMatrix<f64>, eta: &DMatrix<f64>) -> DMatrix<f64> {
    LearningDensity::new(eta).drift(u)
}
