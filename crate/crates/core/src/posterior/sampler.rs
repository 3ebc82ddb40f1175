use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::drift::{DriftField, DEFAULT_LOG_CUTOFF};
use super::hessian::PosteriorMap;
use crate::error::{Error, Result};
use crate::integrator::{run_chain, Projection, Schedule, StormerVerlet};
use crate::learning::{default_eps_grid, dmaps_basis, select_dmaps_hyperparams, DiffusionBasis};
use crate::linalg::mean_and_covariance;
use crate::rng::{self, domain, WienerIncrements};

/// Settings of the posterior chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PosteriorSamplerConfig {
    pub f0: f64,
    /// Number of chain columns; selected from the learned data when absent.
    pub n_s: Option<usize>,
    pub eps_ns: f64,
    pub n_mc: usize,
    pub m0: usize,
    pub l0: usize,
    /// Explicit step; when absent `dt = 2π s / fac`.
    pub dt: Option<f64>,
    pub fac: f64,
    pub eps_diff: Option<f64>,
    /// Projection order; `m = N_s` runs the chain without projection.
    pub m: Option<usize>,
    pub log_cutoff: f64,
    pub seed: u64,
}

impl Default for PosteriorSamplerConfig {
    fn default() -> Self {
        Self {
            f0: 1e-5,
            n_s: None,
            eps_ns: 0.05,
            n_mc: 200,
            m0: 100,
            l0: 10_000,
            dt: None,
            fac: 20.0,
            eps_diff: None,
            m: None,
            log_cutoff: DEFAULT_LOG_CUTOFF,
            seed: 0,
        }
    }
}

impl PosteriorSamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.f0 > 0.0 && self.f0 < 4.0) {
            return Err(Error::Config(format!("posterior f0 must lie in (0, 4), got {}", self.f0)));
        }
        if self.m0 < 1 || self.n_mc < 1 {
            return Err(Error::Config("posterior M0 and n_MC must be at least 1".into()));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0) {
                return Err(Error::Config(format!("posterior dt must be positive, got {dt}")));
            }
        }
        if !(self.fac > 0.0) {
            return Err(Error::Config(format!("posterior Fac must be positive, got {}", self.fac)));
        }
        if !(self.eps_ns > 0.0) {
            return Err(Error::Config(format!("ε_Ns must be positive, got {}", self.eps_ns)));
        }
        if let Some(e) = self.eps_diff {
            if !(e > 0.0) {
                return Err(Error::Config(format!("posterior ε_diff must be positive, got {e}")));
            }
        }
        if matches!(self.n_s, Some(n) if n < 2) || matches!(self.m, Some(0)) {
            return Err(Error::Config("N_s must be at least 2 and m at least 1".into()));
        }
        if !(self.log_cutoff > 0.0) {
            return Err(Error::Config(format!("log cutoff must be positive, got {}", self.log_cutoff)));
        }
        Ok(())
    }

    /// The posterior step for kernel bandwidth `s`.
    pub fn time_step(&self, s: f64) -> f64 {
        self.dt.unwrap_or(2.0 * std::f64::consts::PI * s / self.fac)
    }
}

/// `‖C − I‖_F / ‖I‖_F` for the empirical covariance of the columns.
pub fn ns_criterion(w: &DMatrix<f64>) -> Result<f64> {
    let (_, c) = mean_and_covariance(w)?;
    let n = w.nrows();
    Ok((c - DMatrix::<f64>::identity(n, n)).norm() / (n as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NsSelection {
    pub n_s: usize,
    pub criterion: f64,
    /// `(N_s, criterion)` for every scanned value.
    pub table: Vec<(usize, f64)>,
}

/// Smallest `N_s` on the grid `N_d, 2N_d, 4N_d, …, ν_ar` whose last `N_s`
/// learned columns are white within `eps`.
pub fn select_ns(w_learned: &DMatrix<f64>, n_d: usize, eps: f64) -> Result<NsSelection> {
    let nu_ar = w_learned.ncols();
    if n_d < 2 || nu_ar < n_d {
        return Err(Error::InvalidData(format!("N_s selection needs 2 ≤ N_d ≤ ν_ar, got N_d = {n_d}, ν_ar = {nu_ar}")));
    }
    let mut table = Vec::new();
    let mut n = n_d;
    loop {
        let c = ns_criterion(&w_learned.columns(nu_ar - n, n).into_owned())?;
        table.push((n, c));
        if c <= eps {
            return Ok(NsSelection {
                n_s: n,
                criterion: c,
                table,
            });
        }
        if n == nu_ar {
            log::warn!("ε_Ns = {eps} not reached; using N_s = ν_ar = {nu_ar} (criterion {c:.3e})");
            return Ok(NsSelection {
                n_s: n,
                criterion: c,
                table,
            });
        }
        n = (2 * n).min(nu_ar);
    }
}

/// Columns `s^j = Aᵀ(ŵ^{ν_ar−j+1} − u_T)`, `j = 1..N_s`.
pub fn initial_s(w_learned: &DMatrix<f64>, n_s: usize, map: &PosteriorMap) -> Result<DMatrix<f64>> {
    let nu_ar = w_learned.ncols();
    if n_s > nu_ar || w_learned.nrows() != map.u_t.len() {
        return Err(Error::DimensionMismatch(format!(
            "need {n_s} columns of dimension {}, learned data is {}×{nu_ar}",
            map.u_t.len(),
            w_learned.nrows()
        )));
    }
    let picked = DMatrix::from_fn(w_learned.nrows(), n_s, |i, j| w_learned[(i, nu_ar - 1 - j)]);
    Ok(map.to_s(&picked))
}

/// `r_0 = A⁻¹ v̂_0` with `v̂_0` columns drawn from `N(0, K⁻¹)`.
pub fn initial_velocities(map: &PosteriorMap, n_s: usize, seed: u64) -> DMatrix<f64> {
    let mut r = rng::stream(seed, domain::POSTERIOR_VELOCITY, 0);
    let xi = rng::standard_normal_matrix(&mut r, map.u_t.len(), n_s);
    let v0 = map.a.transpose().solve_upper_triangular(&xi).expect("A has a positive diagonal");
    map.solve_a(&v0)
}

/// Diffusion-maps basis of the `s` columns; missing hyperparameters are
/// selected automatically. The constant vector is kept.
pub fn posterior_dmaps(s: &DMatrix<f64>, eps_diff: Option<f64>, m: Option<usize>) -> Result<DiffusionBasis> {
    if s.ncols() < 2 {
        return Err(Error::InvalidData("posterior diffusion maps need N_s ≥ 2".into()));
    }
    let (eps, m_sel) = match eps_diff {
        Some(e) => (e, None),
        None => {
            let sel = select_dmaps_hyperparams(s, &default_eps_grid(s))?;
            (sel.eps_opt, Some(sel.m_opt))
        }
    };
    let m = match (m, m_sel) {
        (Some(m), _) | (None, Some(m)) => m,
        (None, None) => {
            let spectrum = crate::learning::dmaps_spectrum(s, eps)?;
            crate::learning::m_hat(spectrum.as_slice()).ok_or_else(|| {
                Error::Selection(format!("no spectral gap at ε_diff = {eps}; set m explicitly"))
            })?
        }
    };
    dmaps_basis(s, eps, m.min(s.ncols()))
}

/// `L̃(s) = A⁻¹ L(u_T + A^{-T} s)`.
pub struct TransformedDrift<'a, F: ?Sized> {
    pub field: &'a F,
    pub map: &'a PosteriorMap,
}

impl<F: DriftField + ?Sized> DriftField for TransformedDrift<'_, F> {
    fn dim(&self) -> usize {
        self.field.dim()
    }

    fn drift(&self, s: &DMatrix<f64>) -> DMatrix<f64> {
        self.map.solve_a(&self.field.drift(&self.map.to_u(s)))
    }
}

/// Running-mean stationarity check on `‖S‖²_F / (ν_w N_s)` during burn-in.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BurnInDiagnostic {
    pub mean_at_80_percent: f64,
    pub mean_at_end: f64,
    pub relative_change: f64,
    pub plateau: bool,
}

/// Extracted posterior realizations in reduced coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorChain {
    /// `ŵ^{post}` (`ν_w × ν_post`), block `κ` in columns `κ N_s .. (κ+1) N_s`.
    pub w_hat: DMatrix<f64>,
    /// The same realizations in normalized coordinates `s`.
    pub s: DMatrix<f64>,
    pub burn_in: Option<BurnInDiagnostic>,
}

/// Integrates the normalized ISDE from `(s0, r0)` and maps the extracted
/// blocks back to `ŵ`. With a basis the state is projected on it.
pub fn sample_posterior<F: DriftField + ?Sized>(
    field: &F,
    map: &PosteriorMap,
    basis: Option<&DiffusionBasis>,
    s0: &DMatrix<f64>,
    r0: &DMatrix<f64>,
    cfg: &PosteriorSamplerConfig,
    dt: f64,
) -> Result<PosteriorChain> {
    cfg.validate()?;
    let (nu_w, n_s) = s0.shape();
    if r0.shape() != (nu_w, n_s) || field.dim() != nu_w || basis.is_some_and(|b| b.g.nrows() != n_s) {
        return Err(Error::DimensionMismatch(format!(
            "initial state is {nu_w}×{n_s}, velocity {}×{}, drift dimension {}",
            r0.nrows(),
            r0.ncols(),
            field.dim()
        )));
    }
    let transformed = TransformedDrift { field, map };
    let projection = basis.map(|b| Projection { g: &b.g, a: &b.a });
    let (z0, y0) = match &projection {
        Some(p) => (s0 * p.a, r0 * p.a),
        None => (s0.clone(), r0.clone()),
    };
    let mut noise = WienerIncrements::new(cfg.seed, domain::POSTERIOR_WIENER, nu_w, n_s, dt);
    let schedule = Schedule {
        burn_in: cfg.l0,
        spacing: cfg.m0,
        blocks: cfg.n_mc,
    };
    let mark = (cfg.l0 * 4) / 5;
    let mut running = 0.0;
    let mut at_mark = None;
    let monitor = |step: usize, z: &DMatrix<f64>| {
        if step > cfg.l0 {
            return;
        }
        let second = match &projection {
            Some(p) => (z * p.g.transpose()).norm_squared(),
            None => z.norm_squared(),
        } / (nu_w * n_s) as f64;
        running += (second - running) / step as f64;
        if step == mark.max(1) {
            at_mark = Some(running);
        }
    };
    let blocks = run_chain(
        StormerVerlet { dt, f0: cfg.f0 },
        z0,
        y0,
        projection,
        |s| transformed.drift(s),
        &mut noise,
        schedule,
        monitor,
    )?;
    let burn_in = at_mark.map(|m80| {
        let relative_change = (running - m80).abs() / running.abs().max(f64::MIN_POSITIVE);
        let d = BurnInDiagnostic {
            mean_at_80_percent: m80,
            mean_at_end: running,
            relative_change,
            plateau: relative_change < 0.01,
        };
        if d.plateau {
            log::info!("posterior burn-in plateau reached (relative change {relative_change:.2e})");
        } else {
            log::warn!("posterior burn-in running mean still moving (relative change {relative_change:.2e})");
        }
        d
    });
    let mut s = DMatrix::zeros(nu_w, n_s * blocks.len());
    for (k, b) in blocks.iter().enumerate() {
        s.columns_mut(k * n_s, n_s).copy_from(b);
    }
    let w_hat = map.to_u(&s);
    Ok(PosteriorChain { w_hat, s, burn_in })
}
