//! Probabilistic learning on manifolds: generates a large learned dataset
//! from a small scaled training set.
//!
//! The training columns are whitened by PCA, a diffusion-maps basis of the
//! whitened cloud is built, and a reduced-order dissipative Hamiltonian ISDE
//! whose invariant measure is a shrunk Gaussian KDE of the training data is
//! integrated with Störmer–Verlet. Samples are extracted every `M0` steps
//! after a burn-in and mapped back through the PCA.

mod dmaps;
mod drift;
mod pca;

pub use dmaps::{
    default_eps_grid, dmaps_basis, dmaps_spectrum, kernel_matrix, m_hat, select_dmaps_hyperparams,
    select_from_table, DiffusionBasis, DmapsSelection, GAP_RATIO, PLATEAU_FACTOR,
};
pub use drift::{learning_drift, modified_silverman, silverman_bandwidth, LearningDensity};
pub use pca::{pca_normalize, PcaNormalization, DEFAULT_PCA_TOL};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::{run_chain, Projection, Schedule, StormerVerlet};
use crate::rng::{self, domain, WienerIncrements};

/// Integration and extraction settings for the learning chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearningConfig {
    pub f0: f64,
    pub n_mc: usize,
    pub m0: usize,
    pub l0: usize,
    /// Explicit step; when absent `dt = 2π ŝ / fac`.
    pub dt: Option<f64>,
    pub fac: f64,
    /// Diffusion-maps scale; selected automatically when absent.
    pub eps_diff: Option<f64>,
    /// Diffusion-maps order; selected automatically when absent.
    pub m: Option<usize>,
    /// Relative eigenvalue cutoff of the whitening PCA.
    pub pca_tol: f64,
    pub seed: u64,
}

impl Default for LearningConfig {
    fn default() -> Self {
        Self {
            f0: 1.5,
            n_mc: 150,
            m0: 100,
            l0: 100,
            dt: None,
            fac: 20.0,
            eps_diff: None,
            m: None,
            pca_tol: DEFAULT_PCA_TOL,
            seed: 0,
        }
    }
}

impl LearningConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.f0 > 0.0 && self.f0 < 4.0) {
            return Err(Error::Config(format!("learning f0 must lie in (0, 4), got {}", self.f0)));
        }
        if self.m0 < 1 || self.n_mc < 1 {
            return Err(Error::Config("learning M0 and n_MC must be at least 1".into()));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0) {
                return Err(Error::Config(format!("learning dt must be positive, got {dt}")));
            }
        }
        if !(self.fac > 0.0) {
            return Err(Error::Config(format!("learning Fac must be positive, got {}", self.fac)));
        }
        if matches!(self.eps_diff, Some(e) if !(e > 0.0)) || matches!(self.m, Some(0)) {
            return Err(Error::Config("learning ε_diff must be positive and m at least 1".into()));
        }
        if !(self.pca_tol > 0.0 && self.pca_tol < 1.0) {
            return Err(Error::Config(format!("PCA tolerance must lie in (0, 1), got {}", self.pca_tol)));
        }
        Ok(())
    }

    /// The step used for `ν_x`-dimensional data with `n_d` samples.
    pub fn time_step(&self, nu_x: usize, n_d: usize) -> f64 {
        self.dt.unwrap_or_else(|| {
            let (s_hat, _) = modified_silverman(nu_x, n_d);
            2.0 * std::f64::consts::PI * s_hat / self.fac
        })
    }
}

/// Learned realizations in scaled coordinates (`n × ν_ar`).
#[derive(Debug, Clone, PartialEq)]
pub struct LearnedDataset {
    pub columns: DMatrix<f64>,
    /// Learned realizations in whitened coordinates (`ν_x × ν_ar`).
    pub eta: DMatrix<f64>,
    pub dt: f64,
}

impl LearnedDataset {
    pub fn nu_ar(&self) -> usize {
        self.columns.ncols()
    }
}

/// Runs the reduced-order ISDE and maps the extracted η-blocks back to
/// scaled coordinates. Block `κ` occupies columns `κ N_d .. (κ+1) N_d`.
pub fn generate_learned_dataset(
    norm: &PcaNormalization,
    eta_d: &DMatrix<f64>,
    basis: &DiffusionBasis,
    cfg: &LearningConfig,
) -> Result<LearnedDataset> {
    cfg.validate()?;
    let (nu_x, n_d) = eta_d.shape();
    if nu_x != norm.nu_x() || basis.g.nrows() != n_d {
        return Err(Error::DimensionMismatch(format!(
            "η is {nu_x}×{n_d}, PCA keeps {} components, basis has {} rows",
            norm.nu_x(),
            basis.g.nrows()
        )));
    }
    let dt = cfg.time_step(nu_x, n_d);
    let density = LearningDensity::new(eta_d);
    let z0 = eta_d * &basis.a;
    let mut vel_rng = rng::stream(cfg.seed, domain::LEARNING_VELOCITY, 0);
    let y0 = rng::standard_normal_matrix(&mut vel_rng, nu_x, n_d) * &basis.a;
    let mut noise = WienerIncrements::new(cfg.seed, domain::LEARNING_WIENER, nu_x, n_d, dt);
    let schedule = Schedule {
        burn_in: cfg.l0,
        spacing: cfg.m0,
        blocks: cfg.n_mc,
    };
    let blocks = run_chain(
        StormerVerlet { dt, f0: cfg.f0 },
        z0,
        y0,
        Some(Projection {
            g: &basis.g,
            a: &basis.a,
        }),
        |u| density.drift(u),
        &mut noise,
        schedule,
        |_, _| {},
    )?;
    let mut eta = DMatrix::zeros(nu_x, n_d * blocks.len());
    for (kappa, block) in blocks.iter().enumerate() {
        eta.columns_mut(kappa * n_d, n_d).copy_from(block);
    }
    let columns = norm.denormalize(&eta)?;
    Ok(LearnedDataset { columns, eta, dt })
}

/// Whitening, basis and learned realizations of one learning run.
#[derive(Debug, Clone)]
pub struct LearningOutcome {
    pub norm: PcaNormalization,
    pub basis: DiffusionBasis,
    /// Present when `ε_diff` was selected automatically.
    pub selection: Option<DmapsSelection>,
    pub learned: LearnedDataset,
}

/// Full learning step on scaled training columns (`n × N_d`).
pub fn learn(scaled: &DMatrix<f64>, cfg: &LearningConfig) -> Result<LearningOutcome> {
    cfg.validate()?;
    let (norm, eta) = pca_normalize(scaled, cfg.pca_tol)?;
    let (eps, selection) = match cfg.eps_diff {
        Some(e) => (e, None),
        None => {
            let sel = select_dmaps_hyperparams(&eta, &default_eps_grid(&eta))?;
            (sel.eps_opt, Some(sel))
        }
    };
    let m = match (cfg.m, &selection) {
        (Some(m), _) => m,
        (None, Some(sel)) => sel.m_opt,
        (None, None) => {
            let spectrum = dmaps_spectrum(&eta, eps)?;
            m_hat(spectrum.as_slice())
                .ok_or_else(|| Error::Selection(format!("no spectral gap at ε_diff = {eps}; set m explicitly")))?
        }
    };
    let basis = dmaps_basis(&eta, eps, m.min(eta.ncols()))?;
    log::info!(
        "learning: ν_x = {}, ε_diff = {eps:.4e}, m = {}, N_d = {}",
        norm.nu_x(),
        basis.m(),
        eta.ncols()
    );
    let learned = generate_learned_dataset(&norm, &eta, &basis, cfg)?;
    Ok(LearningOutcome {
        norm,
        basis,
        selection,
        learned,
    })
}
