use nalgebra::{DMatrix, DVector};

use super::RegularizedCovariance;
use crate::error::{Error, Result};
use crate::learning::silverman_bandwidth;
use crate::linalg::{log_sum_exp, spd_inverse, symmetrize, upper_cholesky};
use crate::reduction::{ReducedExperimental, ReducedLearnedDataset};

/// Precision blocks, Schur complements and data of the regularized KDE.
#[derive(Debug, Clone)]
pub struct PosteriorDensityModel {
    pub nu_q: usize,
    pub nu_w: usize,
    pub epsilon: f64,
    pub nu1: usize,
    /// `G = Ĉ_ε⁻¹` (`ν × ν`).
    pub g: DMatrix<f64>,
    pub g_q: DMatrix<f64>,
    pub g_w: DMatrix<f64>,
    /// `ν_q × ν_w` off-diagonal block.
    pub g_qw: DMatrix<f64>,
    /// `G_w − G_qwᵀ G_q⁻¹ G_qw`.
    pub g_0: DMatrix<f64>,
    /// `G_q − G_qw G_w⁻¹ G_qwᵀ`.
    pub g_1: DMatrix<f64>,
    /// `(1 − n_r) G_0 + n_r G_w`.
    pub g_0w: DMatrix<f64>,
    pub g_w_inv: DMatrix<f64>,
    /// Upper Cholesky factors (`M = LᵀL`).
    pub l: DMatrix<f64>,
    pub l_0: DMatrix<f64>,
    pub l_1: DMatrix<f64>,
    pub l_q: DMatrix<f64>,
    pub l_w: DMatrix<f64>,
    pub l_0w: DMatrix<f64>,
    pub s_ar: f64,
    /// Kernel centers `x̂^ℓ` (`ν × ν_ar`).
    pub centers: DMatrix<f64>,
    /// Experimental `q̂^{exper,r}` (`ν_q × n_r`).
    pub exp_q: DMatrix<f64>,
    /// `G_qwᵀ Σ_r q̂^{exper,r}`.
    pub b_exp: DVector<f64>,
    pub log_c2: f64,
    pub log_c3: f64,
}

/// Quadratic form `‖L d‖²` for an upper-triangular `L`.
pub(crate) fn upper_quad(l: &DMatrix<f64>, d: &[f64]) -> f64 {
    let n = d.len();
    let mut acc = 0.0;
    for i in 0..n {
        let mut row = 0.0;
        for j in i..n {
            row += l[(i, j)] * d[j];
        }
        acc += row * row;
    }
    acc
}

fn log_det_from_upper(l: &DMatrix<f64>) -> f64 {
    2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>()
}

fn chol(m: &DMatrix<f64>, name: &str, epsilon: f64, n_r: usize) -> Result<DMatrix<f64>> {
    upper_cholesky(m).ok_or_else(|| {
        Error::Numerical(format!(
            "{name} is not positive definite (ε = {epsilon}, n_r = {n_r})"
        ))
    })
}

impl PosteriorDensityModel {
    /// Builds the model from an arbitrary symmetric positive definite
    /// precision `G`, bandwidth `s_ar`, centers and experimental columns.
    #[allow(clippy::too_many_arguments)]
    pub fn from_precision(
        nu_q: usize,
        nu_w: usize,
        g: DMatrix<f64>,
        s_ar: f64,
        centers: DMatrix<f64>,
        exp_q: DMatrix<f64>,
        epsilon: f64,
        nu1: usize,
    ) -> Result<Self> {
        let nu = nu_q + nu_w;
        if g.shape() != (nu, nu) || centers.nrows() != nu || exp_q.nrows() != nu_q {
            return Err(Error::DimensionMismatch(format!(
                "precision {:?}, centers {:?} and experiments {:?} disagree with ν_q = {nu_q}, ν_w = {nu_w}",
                g.shape(),
                centers.shape(),
                exp_q.shape()
            )));
        }
        if centers.ncols() == 0 || exp_q.ncols() == 0 {
            return Err(Error::InvalidData("model needs at least one center and one experiment".into()));
        }
        let n_r = exp_q.ncols();
        let g = symmetrize(&g);
        let g_q = g.view((0, 0), (nu_q, nu_q)).into_owned();
        let g_w = g.view((nu_q, nu_q), (nu_w, nu_w)).into_owned();
        let g_qw = g.view((0, nu_q), (nu_q, nu_w)).into_owned();
        let l = chol(&g, "G", epsilon, n_r)?;
        let l_q = chol(&g_q, "G_q", epsilon, n_r)?;
        let l_w = chol(&g_w, "G_w", epsilon, n_r)?;
        let g_q_inv = spd_inverse(&g_q).expect("G_q factorized above");
        let g_w_inv = spd_inverse(&g_w).expect("G_w factorized above");
        let g_0 = symmetrize(&(&g_w - g_qw.transpose() * &g_q_inv * &g_qw));
        let g_1 = symmetrize(&(&g_q - &g_qw * &g_w_inv * g_qw.transpose()));
        let l_0 = chol(&g_0, "G_0", epsilon, n_r)?;
        let l_1 = chol(&g_1, "G_1", epsilon, n_r)?;
        let g_0w = symmetrize(&(&g_0 * (1.0 - n_r as f64) + &g_w * n_r as f64));
        let l_0w = chol(&g_0w, "G_0w", epsilon, n_r)?;
        let b_exp = g_qw.transpose() * exp_q.column_sum();
        let two_pi_ln = (2.0 * std::f64::consts::PI).ln();
        let log_c2 = 0.5 * log_det_from_upper(&l) - nu as f64 * (s_ar.ln() + 0.5 * two_pi_ln);
        let log_c3 = 0.5 * log_det_from_upper(&l_0) - nu_w as f64 * (s_ar.ln() + 0.5 * two_pi_ln);
        Ok(Self {
            nu_q,
            nu_w,
            epsilon,
            nu1,
            g,
            g_q,
            g_w,
            g_qw,
            g_0,
            g_1,
            g_0w,
            g_w_inv,
            l,
            l_0,
            l_1,
            l_q,
            l_w,
            l_0w,
            s_ar,
            centers,
            exp_q,
            b_exp,
            log_c2,
            log_c3,
        })
    }

    pub fn nu(&self) -> usize {
        self.nu_q + self.nu_w
    }

    pub fn nu_ar(&self) -> usize {
        self.centers.ncols()
    }

    pub fn n_r(&self) -> usize {
        self.exp_q.ncols()
    }

    /// Reduced QoI centers `q̂^ℓ` (`ν_q × ν_ar`).
    pub fn q_centers(&self) -> DMatrix<f64> {
        self.centers.rows(0, self.nu_q).into_owned()
    }

    /// Reduced parameter centers `ŵ^ℓ` (`ν_w × ν_ar`).
    pub fn w_centers(&self) -> DMatrix<f64> {
        self.centers.rows(self.nu_q, self.nu_w).into_owned()
    }

    fn log_mean_kernel(&self, exponents: &[f64]) -> f64 {
        log_sum_exp(exponents) - (self.nu_ar() as f64).ln()
    }

    /// `log p(q̂, ŵ)` of the joint kernel density.
    pub fn joint_logpdf(&self, q: &DVector<f64>, w: &DVector<f64>) -> f64 {
        let nu = self.nu();
        let inv = 1.0 / (2.0 * self.s_ar * self.s_ar);
        let mut d = vec![0.0; nu];
        let exps: Vec<f64> = self
            .centers
            .column_iter()
            .map(|c| {
                for k in 0..self.nu_q {
                    d[k] = q[k] - c[k];
                }
                for k in 0..self.nu_w {
                    d[self.nu_q + k] = w[k] - c[self.nu_q + k];
                }
                -upper_quad(&self.l, &d) * inv
            })
            .collect();
        self.log_c2 + self.log_mean_kernel(&exps)
    }

    /// `log p(ŵ)` of the prior (W-marginal) kernel density.
    pub fn prior_w_logpdf(&self, w: &DVector<f64>) -> f64 {
        let inv = 1.0 / (2.0 * self.s_ar * self.s_ar);
        let mut d = vec![0.0; self.nu_w];
        let exps: Vec<f64> = self
            .centers
            .column_iter()
            .map(|c| {
                for k in 0..self.nu_w {
                    d[k] = w[k] - c[self.nu_q + k];
                }
                -upper_quad(&self.l_0, &d) * inv
            })
            .collect();
        self.log_c3 + self.log_mean_kernel(&exps)
    }

    /// `Σ_r log p(q̂^{exper,r}, ŵ) + (1 − n_r) log p(ŵ)`.
    pub fn posterior_w_logpdf_unnorm(&self, w: &DVector<f64>) -> f64 {
        let likelihood: f64 = self
            .exp_q
            .column_iter()
            .map(|q| self.joint_logpdf(&q.into_owned(), w))
            .sum();
        let n_r = self.n_r() as f64;
        if n_r == 1.0 {
            likelihood
        } else {
            likelihood + (1.0 - n_r) * self.prior_w_logpdf(w)
        }
    }

    /// Potential `V(ŵ) = −log p(ŵ)` up to a constant.
    pub fn potential(&self, w: &DVector<f64>) -> f64 {
        -self.posterior_w_logpdf_unnorm(w)
    }
}

/// Assembles the model from the regularized covariance, the reduced learned
/// set and the reduced experimental data.
pub fn build_density_model(
    reg: &RegularizedCovariance,
    reduced: &ReducedLearnedDataset,
    exp: &ReducedExperimental,
) -> Result<PosteriorDensityModel> {
    if reg.precision.nrows() != reduced.nu() {
        return Err(Error::DimensionMismatch(format!(
            "covariance is {0}×{0}, reduced data has ν = {1}",
            reg.precision.nrows(),
            reduced.nu()
        )));
    }
    let s_ar = silverman_bandwidth(reduced.nu(), reduced.nu_ar());
    PosteriorDensityModel::from_precision(
        reduced.nu_q,
        reduced.nu_w,
        reg.precision.clone(),
        s_ar,
        reduced.columns.clone(),
        exp.columns.clone(),
        reg.epsilon,
        reg.nu1,
    )
}

/// Upper bound on the variance of the kernel estimator at a point where the
/// estimator has mean `mean_p`, for `ν_ar` centers in `ν` dimensions and
/// precision determinant `det_g`.
pub fn kde_variance_bound(nu: usize, nu_ar: usize, det_g: f64, mean_p: f64) -> f64 {
    let nu_f = nu as f64;
    let exponent = nu_f / (nu_f + 4.0);
    (1.0 / nu_ar as f64).powf(4.0 / (nu_f + 4.0))
        * ((nu_f + 2.0) / 4.0).powf(exponent)
        * det_g.sqrt()
        / (2.0 * std::f64::consts::PI).powf(nu_f / 2.0)
        * mean_p
}
