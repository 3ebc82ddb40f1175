//! Regularized Gaussian kernel-density model of the reduced joint
//! distribution of `X̂ = (Q̂, Ŵ)`.
//!
//! The empirical covariance `C` of the reduced learned set has unit diagonal
//! blocks, so its eigenvalues lie in `[0, 2]`. Eigenvalues below 1 are
//! replaced by `ε² λ_{ν1}`, where `λ_{ν1}` is the smallest eigenvalue `≥ 1`;
//! the kernel precision is `G = Ĉ_ε⁻¹ / s²` with the Silverman bandwidth `s`.
//! The W-marginal (prior) kernel uses the Schur complement
//! `G_0 = G_w − G_qwᵀ G_q⁻¹ G_qw`.
//!
//! Not implemented: pseudo-inverse kernels supported on the range of `C`,
//! additive-noise regularization `C + η² I`, and metric-based variants. The
//! first produces a density concentrated on a subspace, the second does not
//! bound the condition number independently of the spectrum, and the third
//! lacks a closed-form marginal.

mod model;

pub use model::{build_density_model, kde_variance_bound, PosteriorDensityModel};
pub(crate) use model::upper_quad as model_quad;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{mean_and_covariance, sorted_symmetric_eigen};
use crate::reduction::ReducedLearnedDataset;

/// Working value of the regularization parameter.
pub const DEFAULT_EPSILON: f64 = 0.5;
/// Smallest accepted regularization parameter.
pub const EPSILON_MIN: f64 = 0.1;
/// Eigenvalues within this distance below 1 count as `≥ 1`.
pub const NU1_TOLERANCE: f64 = 1e-12;

/// Empirical covariance of the reduced learned set.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockCovariance {
    pub nu_q: usize,
    pub nu_w: usize,
    pub matrix: DMatrix<f64>,
}

impl BlockCovariance {
    pub fn nu(&self) -> usize {
        self.nu_q + self.nu_w
    }

    /// The `ν_q × ν_w` cross-covariance block.
    pub fn cross_block(&self) -> DMatrix<f64> {
        self.matrix.view((0, self.nu_q), (self.nu_q, self.nu_w)).into_owned()
    }
}

/// Unbiased covariance of the reduced columns.
pub fn empirical_block_covariance(reduced: &ReducedLearnedDataset) -> Result<BlockCovariance> {
    let (_, matrix) = mean_and_covariance(&reduced.columns)?;
    Ok(BlockCovariance {
        nu_q: reduced.nu_q,
        nu_w: reduced.nu_w,
        matrix,
    })
}

/// Spectral regularization `Ĉ_ε = Φ Λ_ε Φᵀ` and its inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularizedCovariance {
    pub epsilon: f64,
    pub nu1: usize,
    /// Spectrum of the input, descending.
    pub eigvals: DVector<f64>,
    pub eigvecs: DMatrix<f64>,
    /// Regularized spectrum `Λ_ε`.
    pub reg_eigvals: DVector<f64>,
    /// `Ĉ_ε`.
    pub matrix: DMatrix<f64>,
    /// `G = Ĉ_ε⁻¹`, assembled from the spectral factors.
    pub precision: DMatrix<f64>,
}

impl RegularizedCovariance {
    /// `cond(Ĉ_ε)` from the regularized spectrum.
    pub fn condition_number(&self) -> f64 {
        let max = self.reg_eigvals.max();
        let min = self.reg_eigvals.min();
        max / min
    }
}

/// Regularizes a block covariance.
pub fn regularize_covariance(cov: &BlockCovariance, epsilon: f64) -> Result<RegularizedCovariance> {
    regularize_symmetric(&cov.matrix, epsilon)
}

/// Regularizes any symmetric matrix whose largest eigenvalue is at least 1.
pub fn regularize_symmetric(c: &DMatrix<f64>, epsilon: f64) -> Result<RegularizedCovariance> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Config(format!("ε must lie in (0, 1), got {epsilon}")));
    }
    let (eigvals, eigvecs) = sorted_symmetric_eigen(c);
    let nu1 = eigvals.iter().take_while(|&&l| l >= 1.0 - NU1_TOLERANCE).count();
    if nu1 == 0 {
        return Err(Error::Numerical(format!(
            "largest covariance eigenvalue {} is below 1",
            eigvals[0]
        )));
    }
    let floor = epsilon * epsilon * eigvals[nu1 - 1];
    let reg_eigvals = DVector::from_fn(eigvals.len(), |k, _| if k < nu1 { eigvals[k] } else { floor });
    let assemble = |d: &DVector<f64>| {
        let scaled = DMatrix::from_fn(eigvecs.nrows(), eigvecs.ncols(), |i, j| eigvecs[(i, j)] * d[j]);
        crate::linalg::symmetrize(&(scaled * eigvecs.transpose()))
    };
    let matrix = if nu1 == eigvals.len() { crate::linalg::symmetrize(c) } else { assemble(&reg_eigvals) };
    let precision = assemble(&reg_eigvals.map(|l| 1.0 / l));
    Ok(RegularizedCovariance {
        epsilon,
        nu1,
        eigvals,
        eigvecs,
        reg_eigvals,
        matrix,
        precision,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn hand_regularization() {
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let r = regularize_symmetric(&c, 0.5).unwrap();
        assert_eq!(r.nu1, 1);
        assert_relative_eq!(r.eigvals, DVector::from_vec(vec![1.5, 0.5]), epsilon = 1e-14);
        assert_relative_eq!(r.reg_eigvals, DVector::from_vec(vec![1.5, 0.375]), epsilon = 1e-14);
        assert_relative_eq!(
            r.matrix,
            DMatrix::from_row_slice(2, 2, &[0.9375, 0.5625, 0.5625, 0.9375]),
            epsilon = 1e-14
        );
        assert_relative_eq!(r.condition_number(), 4.0, epsilon = 1e-13);
        assert_relative_eq!(&r.matrix * &r.precision, DMatrix::identity(2, 2), epsilon = 1e-13);
    }

    #[test]
    fn identity_needs_no_regularization() {
        let r = regularize_symmetric(&DMatrix::identity(4, 4), 0.3).unwrap();
        assert_eq!(r.nu1, 4);
        assert_eq!(r.matrix, DMatrix::identity(4, 4));
        assert_relative_eq!(r.condition_number(), 1.0);
    }

    #[test]
    fn rejects_out_of_range_epsilon() {
        assert!(regularize_symmetric(&DMatrix::identity(2, 2), 1.0).is_err());
        assert!(regularize_symmetric(&DMatrix::identity(2, 2), 0.0).is_err());
    }

    #[test]
    fn extreme_whitened_pair_attains_bounds() {
        let s = 2f64.sqrt();
        let x = DMatrix::from_row_slice(2, 2, &[1.0 / s, -1.0 / s, 1.0 / s, -1.0 / s]);
        let red = ReducedLearnedDataset::new(1, 1, x).unwrap();
        let c = empirical_block_covariance(&red).unwrap();
        assert_relative_eq!(c.matrix, DMatrix::from_element(2, 2, 1.0), epsilon = 1e-14);
        let vals = crate::linalg::sorted_symmetric_eigenvalues(&c.matrix);
        assert_relative_eq!(vals[0], 2.0, epsilon = 1e-14);
        assert!(vals[1].abs() < 1e-14);
        assert_relative_eq!(c.cross_block()[(0, 0)], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn independent_blocks_have_unit_spectrum() {
        let mut r = crate::rng::stream(4, 4, 4);
        let n = 20_000;
        let x = crate::rng::standard_normal_matrix(&mut r, 4, n);
        let model = crate::reduction::reduce(&x, 2, 1e-9, 1e-9).unwrap();
        let c = empirical_block_covariance(&model.learned).unwrap();
        let tol = 5.0 / (n as f64).sqrt();
        for v in crate::linalg::sorted_symmetric_eigenvalues(&c.matrix).iter() {
            assert!((v - 1.0).abs() < tol, "eigenvalue {v}");
        }
        assert!(c.cross_block().amax() < tol);
    }

    // Minimizer of ‖C y − x‖² + ‖Γ y‖² equals G x when the tail satisfies
    // ε² λ_j λ_{ν1} ≥ λ_j².
    fn tikhonov_case(lambdas: [f64; 3], angle: f64, eps: f64) {
        let (c, s) = (angle.cos(), angle.sin());
        let rot = DMatrix::from_row_slice(3, 3, &[c, -s, 0.0, s * 0.6, c * 0.6, 0.8, -s * 0.8, -c * 0.8, 0.6]);
        let cmat = &rot * DMatrix::from_diagonal(&DVector::from_row_slice(&lambdas)) * rot.transpose();
        let r = regularize_symmetric(&cmat, eps).unwrap();
        let l_nu1 = r.eigvals[r.nu1 - 1];
        let gamma2 = DVector::from_fn(3, |j, _| {
            if j < r.nu1 {
                0.0
            } else {
                eps * eps * r.eigvals[j] * l_nu1 - r.eigvals[j] * r.eigvals[j]
            }
        });
        assert!(gamma2.iter().all(|&g| g >= 0.0));
        let gamma_sq = &r.eigvecs * DMatrix::from_diagonal(&gamma2) * r.eigvecs.transpose();
        let x = DVector::from_vec(vec![0.7, -1.3, 0.4]);
        let normal = &cmat * &cmat + gamma_sq;
        let y = normal.lu().solve(&(&cmat * &x)).unwrap();
        assert!((y - &r.precision * &x).norm() < 1e-10 * (1.0 + x.norm()));
    }

    #[test]
    fn tikhonov_form() {
        tikhonov_case([1.8, 0.12, 0.05], 0.3, 0.5);
        tikhonov_case([1.5, 1.2, 0.2], 1.1, 0.6);
        tikhonov_case([2.5, 0.3, 0.2], 2.0, 0.9);
    }

    proptest! {
        #[test]
        fn condition_bound(split in 0.01f64..0.99, eps in 0.1f64..0.95) {
            // Spectra of unit-diagonal matrices lie in [0, 2] with trace 2 for ν = 2.
            let rho = 2.0 * split - 1.0;
            let c = DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]);
            let r = regularize_symmetric(&c, eps).unwrap();
            prop_assert!(r.condition_number() <= 2.0 / (eps * eps) * (1.0 + 1e-12));
        }
    }
}
