//! Posterior sampling of the reduced parameters given experimental outputs.
//!
//! The posterior drift `L = ∇ log p` of the kernel-density posterior is
//! evaluated in log domain. A predictor (closed-form conditional mean) and a
//! corrector (local maximization of `log p`) give a center `w̄`; the Hessian
//! `K` at `w̄` normalizes the chain to `s = Aᵀ(u − u_T)`, `K = A Aᵀ`, where a
//! Gaussian posterior has identity covariance. The normalized ISDE is
//! integrated with Störmer–Verlet, optionally projected on a diffusion-maps
//! basis of the initial columns, and the extracted blocks are mapped back.

mod centering;
mod drift;
mod hessian;
mod sampler;
mod tree;

pub use centering::{bfgs_maximize, corrector_mode, predictor_mean, CorrectorResult, CORRECTOR_MAX_ITER, CORRECTOR_TOL};
pub use drift::{posterior_drift, DriftCache, DriftField, GaussianDrift, KdePosterior, DEFAULT_LOG_CUTOFF};
pub use hessian::{
    build_posterior_map, default_fd_steps, fd_jacobian, hessian_k, HessianAttempt, HessianReport, PosteriorMap,
    HESSIAN_SYMMETRY_TOL,
};
pub use sampler::{
    initial_s, initial_velocities, ns_criterion, posterior_dmaps, sample_posterior, select_ns, BurnInDiagnostic,
    NsSelection, PosteriorChain, PosteriorSamplerConfig, TransformedDrift,
};

use nalgebra::{DMatrix, DVector};

use crate::datasets::ScalingTransform;
use crate::density::PosteriorDensityModel;
use crate::error::{Error, Result};
use crate::reduction::BlockPca;

/// Everything produced by [`run_posterior`].
#[derive(Debug, Clone)]
pub struct PosteriorRun {
    pub predictor: DVector<f64>,
    pub corrector: CorrectorResult,
    pub hessian: HessianReport,
    pub map: PosteriorMap,
    pub n_s: NsSelection,
    /// `(ε_diff, m)` of the projection basis, `None` for the full basis.
    pub projection: Option<(f64, usize)>,
    pub dt: f64,
    pub chain: PosteriorChain,
}

/// Runs centering, normalization and sampling against the learned `ŵ`
/// columns (`ν_w × ν_ar`) of the reduced learned dataset.
pub fn run_posterior(
    model: &PosteriorDensityModel,
    w_learned: &DMatrix<f64>,
    n_d: usize,
    cfg: &PosteriorSamplerConfig,
) -> Result<PosteriorRun> {
    cfg.validate()?;
    if w_learned.nrows() != model.nu_w {
        return Err(Error::DimensionMismatch(format!(
            "learned ŵ has {} rows, model has ν_w = {}",
            w_learned.nrows(),
            model.nu_w
        )));
    }
    // Centering and the finite-difference Hessian need a drift that is
    // smooth to roundoff; a coarser cutoff is only used by the chain.
    let exact = DriftCache::with_cutoff(model, cfg.log_cutoff.max(DEFAULT_LOG_CUTOFF));
    let exact_field = KdePosterior { model, cache: &exact };
    let predictor = predictor_mean(model, &exact);
    let corrector = corrector_mode(model, &exact, &predictor);
    log::info!(
        "corrector: {} iterations, |∇J| = {:.2e}, converged = {}",
        corrector.iterations,
        corrector.gradient_norm,
        corrector.converged
    );
    let (k, a, hessian) = hessian_k(&exact_field, &corrector.mode, &default_fd_steps())?;
    let map = build_posterior_map(&exact_field, k, a, corrector.mode.clone());
    let n_s = match cfg.n_s {
        Some(n) => {
            if n > w_learned.ncols() {
                return Err(Error::Config(format!("N_s = {n} exceeds ν_ar = {}", w_learned.ncols())));
            }
            let criterion = ns_criterion(&w_learned.columns(w_learned.ncols() - n, n).into_owned())?;
            NsSelection {
                n_s: n,
                criterion,
                table: vec![(n, criterion)],
            }
        }
        None => select_ns(w_learned, n_d, cfg.eps_ns)?,
    };
    let s0 = initial_s(w_learned, n_s.n_s, &map)?;
    let r0 = initial_velocities(&map, n_s.n_s, cfg.seed);
    let basis = match cfg.m {
        Some(m) if m >= n_s.n_s => None,
        _ => Some(posterior_dmaps(&s0, cfg.eps_diff, cfg.m)?),
    };
    let basis = basis.filter(|b| !b.is_full());
    let projection = basis.as_ref().map(|b| (b.eps_diff, b.m()));
    let dt = cfg.time_step(model.s_ar);
    log::info!(
        "posterior chain: N_s = {}, projection = {projection:?}, dt = {dt:.4e}, {} steps",
        n_s.n_s,
        cfg.l0 + cfg.m0 * cfg.n_mc
    );
    let coarse;
    let cache = if cfg.log_cutoff < DEFAULT_LOG_CUTOFF {
        coarse = DriftCache::with_cutoff(model, cfg.log_cutoff);
        &coarse
    } else {
        &exact
    };
    let field = KdePosterior { model, cache };
    let chain = sample_posterior(&field, &map, basis.as_ref(), &s0, &r0, cfg, dt)?;
    Ok(PosteriorRun {
        predictor,
        corrector,
        hessian,
        map,
        n_s,
        projection,
        dt,
        chain,
    })
}

/// Posterior realizations in reduced, scaled and original coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSamples {
    pub w_hat: DMatrix<f64>,
    pub w_scaled: DMatrix<f64>,
    pub w: DMatrix<f64>,
}

/// `w = w̄ + φ_w μ_w^{1/2} ŵ`, then the inverse scaling of the parameter block.
pub fn map_to_original(w_hat: &DMatrix<f64>, pca_w: &BlockPca, scaling: &ScalingTransform) -> Result<PosteriorSamples> {
    let w_scaled = pca_w.reconstruct(w_hat)?;
    let w = scaling.invert_w(&w_scaled)?;
    Ok(PosteriorSamples {
        w_hat: w_hat.clone(),
        w_scaled,
        w,
    })
}
