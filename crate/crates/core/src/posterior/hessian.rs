use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::drift::DriftField;
use crate::error::{Error, Result};
use crate::linalg::{sorted_symmetric_eigenvalues, symmetrize};

/// Maximum relative asymmetry `‖K − Kᵀ‖_F / ‖K‖_F` of an accepted Jacobian.
pub const HESSIAN_SYMMETRY_TOL: f64 = 1e-6;

/// Finite-difference steps `0.1 · 2^{−α}`, `α = 0..=20`.
pub fn default_fd_steps() -> Vec<f64> {
    (0..=20).map(|a| 0.1 * 0.5f64.powi(a)).collect()
}

/// Diagnostics of one finite-difference step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HessianAttempt {
    pub step: f64,
    pub asymmetry: f64,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HessianReport {
    pub accepted_step: f64,
    pub attempts: Vec<HessianAttempt>,
}

/// Normalization of the posterior chain around `w̄`.
///
/// `K = A Aᵀ` and `u_T = w̄ + K⁻¹ L(w̄)`; the sampler runs in
/// `s = Aᵀ(u − u_T)`, where a linearized drift becomes `−s`.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorMap {
    pub w_bar: DVector<f64>,
    pub k: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub u_t: DVector<f64>,
}

impl PosteriorMap {
    /// `u_T + A^{-T} s` for each column.
    pub fn to_u(&self, s: &DMatrix<f64>) -> DMatrix<f64> {
        let mut u = self
            .a
            .transpose()
            .solve_upper_triangular(s)
            .expect("A has a positive diagonal");
        for mut c in u.column_iter_mut() {
            c += &self.u_t;
        }
        u
    }

    /// `Aᵀ (u − u_T)` for each column.
    pub fn to_s(&self, u: &DMatrix<f64>) -> DMatrix<f64> {
        let mut d = u.clone();
        for mut c in d.column_iter_mut() {
            c -= &self.u_t;
        }
        self.a.transpose() * d
    }

    /// `A⁻¹ x` for each column.
    pub fn solve_a(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.a.solve_lower_triangular(x).expect("A has a positive diagonal")
    }
}

/// Central-difference Jacobian of `field` at `w` with step `h`.
pub fn fd_jacobian<F: DriftField + ?Sized>(field: &F, w: &DVector<f64>, h: f64) -> DMatrix<f64> {
    let n = w.len();
    let mut points = DMatrix::zeros(n, 2 * n);
    for j in 0..n {
        let mut plus = w.clone();
        plus[j] += h;
        let mut minus = w.clone();
        minus[j] -= h;
        points.set_column(2 * j, &plus);
        points.set_column(2 * j + 1, &minus);
    }
    let l = field.drift(&points);
    DMatrix::from_fn(n, n, |i, j| (l[(i, 2 * j)] - l[(i, 2 * j + 1)]) / (2.0 * h))
}

/// `K = −∂L/∂u` at `w̄`, taking the first step of `steps` whose Jacobian is
/// symmetric and positive definite. Returns `(K, A, report)` with `A` the
/// lower Cholesky factor.
pub fn hessian_k<F: DriftField + ?Sized>(
    field: &F,
    w_bar: &DVector<f64>,
    steps: &[f64],
) -> Result<(DMatrix<f64>, DMatrix<f64>, HessianReport)> {
    let mut attempts = Vec::with_capacity(steps.len());
    for &h in steps {
        let k = -fd_jacobian(field, w_bar, h);
        let norm = k.norm();
        let asymmetry = if norm > 0.0 {
            (&k - k.transpose()).norm() / norm
        } else {
            f64::INFINITY
        };
        let k = symmetrize(&k);
        let eig = sorted_symmetric_eigenvalues(&k);
        let attempt = HessianAttempt {
            step: h,
            asymmetry,
            min_eigenvalue: eig[eig.len() - 1],
            max_eigenvalue: eig[0],
        };
        let ok = asymmetry < HESSIAN_SYMMETRY_TOL && attempt.min_eigenvalue > 0.0;
        attempts.push(attempt);
        if ok {
            if let Some(chol) = k.clone().cholesky() {
                let a = chol.l();
                return Ok((
                    k,
                    a,
                    HessianReport {
                        accepted_step: h,
                        attempts,
                    },
                ));
            }
        }
    }
    let summary: Vec<String> = attempts
        .iter()
        .map(|a| {
            format!(
                "h = {:.2e}: asymmetry {:.2e}, eigenvalues [{:.3e}, {:.3e}]",
                a.step, a.asymmetry, a.min_eigenvalue, a.max_eigenvalue
            )
        })
        .collect();
    Err(Error::Numerical(format!(
        "no finite-difference step gives a symmetric positive definite K; {}",
        summary.join("; ")
    )))
}

/// Completes the map with `u_T = w̄ + K⁻¹ L(w̄)`.
pub fn build_posterior_map<F: DriftField + ?Sized>(
    field: &F,
    k: DMatrix<f64>,
    a: DMatrix<f64>,
    w_bar: DVector<f64>,
) -> PosteriorMap {
    let l = field.drift_at(&w_bar);
    let y = a.solve_lower_triangular(&l).expect("A has a positive diagonal");
    let shift = a.transpose().solve_upper_triangular(&y).expect("A has a positive diagonal");
    PosteriorMap {
        u_t: &w_bar + shift,
        w_bar,
        k,
        a,
    }
}
