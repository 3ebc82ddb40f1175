use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::tree::PointTree;
use crate::density::PosteriorDensityModel;

/// Terms whose log-weight falls this far below the running maximum are
/// skipped; their total relative contribution is below `ν_ar e^{-cutoff}`.
pub const DEFAULT_LOG_CUTOFF: f64 = 40.0;

/// Precomputed center quantities for the posterior drift.
///
/// For experiment `r` and center `ℓ` the exponent of `ζ_1^{rℓ}` is rewritten
/// as `‖L_w (u − m^{rℓ})‖² + κ^{rℓ}` with
/// `m^{rℓ} = ŵ^ℓ − G_w⁻¹ G_qwᵀ (q̂^{exper,r} − q̂^ℓ)` and
/// `κ^{rℓ} = ⟨G_1 (q̂^{exper,r} − q̂^ℓ), q̂^{exper,r} − q̂^ℓ⟩`, i.e. the squared
/// distance between `(L_w u, 0)` and `(L_w m^{rℓ}, √κ^{rℓ})`. A kd-tree over
/// these points per experiment (and over `L_0 ŵ^ℓ` for the prior term)
/// returns only the terms within `2 s² cutoff` of the largest one.
#[derive(Debug, Clone)]
pub struct DriftCache {
    /// `G_0 ŵ^ℓ` (`ν_w × ν_ar`).
    pub w0_tilde: DMatrix<f64>,
    /// `G_w ŵ^ℓ + G_qwᵀ q̂^ℓ` (`ν_w × ν_ar`).
    pub w1_tilde: DMatrix<f64>,
    /// `‖L_q (q̂^{exper,r} − q̂^ℓ)‖²` (`n_r × ν_ar`).
    pub p0: DMatrix<f64>,
    /// `G_qwᵀ Σ_r q̂^{exper,r}`.
    pub b_exp: DVector<f64>,
    cutoff: f64,
    nu_w: usize,
    prior: PointTree,
    experiments: Vec<PointTree>,
}

impl DriftCache {
    pub fn new(model: &PosteriorDensityModel) -> Self {
        Self::with_cutoff(model, DEFAULT_LOG_CUTOFF)
    }

    /// Cache with a custom log-weight cutoff (`f64::INFINITY` keeps every term).
    pub fn with_cutoff(model: &PosteriorDensityModel, cutoff: f64) -> Self {
        let nu_w = model.nu_w;
        let nu_ar = model.nu_ar();
        let q = model.q_centers();
        let w = model.w_centers();
        let w0_tilde = &model.g_0 * &w;
        let w1_tilde = &model.g_w * &w + model.g_qw.transpose() * &q;
        let l0w = &model.l_0 * &w;
        let prior = PointTree::new(nu_w, l0w.as_slice());
        let shift_map = &model.g_w_inv * model.g_qw.transpose();
        let mut p0 = DMatrix::zeros(model.n_r(), nu_ar);
        let experiments = model
            .exp_q
            .column_iter()
            .enumerate()
            .map(|(r, qe)| {
                let dq = DMatrix::from_fn(model.nu_q, nu_ar, |k, l| qe[k] - q[(k, l)]);
                for l in 0..nu_ar {
                    p0[(r, l)] = (&model.l_q * dq.column(l)).norm_squared();
                }
                let m = &w - &shift_map * &dq;
                let mu = &model.l_w * m;
                let mut points = Vec::with_capacity((nu_w + 1) * nu_ar);
                for l in 0..nu_ar {
                    let d = dq.column(l);
                    let kappa = (d.transpose() * &model.g_1 * d)[(0, 0)].max(0.0);
                    points.extend(mu.column(l).iter());
                    points.push(kappa.sqrt());
                }
                PointTree::new(nu_w + 1, &points)
            })
            .collect();
        Self {
            w0_tilde,
            w1_tilde,
            p0,
            b_exp: model.b_exp.clone(),
            cutoff,
            nu_w,
            prior,
            experiments,
        }
    }

    /// Log-target `J(u)` (up to a constant) and drift `L(u) = ∇J(u)` at one point.
    pub fn evaluate(&self, model: &PosteriorDensityModel, u: &[f64], scratch: &mut Vec<f64>) -> (f64, Vec<f64>) {
        let nu_w = self.nu_w;
        let s2 = model.s_ar * model.s_ar;
        let inv = 1.0 / (2.0 * s2);
        let n_r = model.n_r() as f64;
        let mut total = DVector::zeros(nu_w);
        let mut value = 0.0;
        let mut avg = vec![0.0; nu_w];

        let window = 2.0 * s2 * self.cutoff;
        let mut index = Vec::new();
        let mut gather = |tree: &PointTree, q: &[f64], values: &DMatrix<f64>, avg: &mut [f64]| -> f64 {
            scratch.clear();
            index.clear();
            tree.for_each_within(q, window, |l, d| {
                scratch.push(-d * inv);
                index.push(l);
            });
            indexed_average(scratch, &index, values, avg)
        };

        if model.n_r() != 1 {
            let v0 = upper_times(&model.l_0, u);
            let lse = gather(&self.prior, &v0, &self.w0_tilde, &mut avg);
            value += (1.0 - n_r) * lse;
            for k in 0..nu_w {
                total[k] += (1.0 - n_r) * avg[k];
            }
        }

        let mut vw = upper_times(&model.l_w, u);
        vw.push(0.0);
        for tree in &self.experiments {
            let lse = gather(tree, &vw, &self.w1_tilde, &mut avg);
            value += lse;
            for k in 0..nu_w {
                total[k] += avg[k];
            }
        }

        let uv = DVector::from_column_slice(u);
        let grad = (total - &model.g_0w * uv - &self.b_exp) / s2;
        (value, grad.iter().copied().collect())
    }

    /// Column-wise drift of a `ν_w × N` state.
    pub fn drift(&self, model: &PosteriorDensityModel, u: &DMatrix<f64>) -> DMatrix<f64> {
        let cols: Vec<Vec<f64>> = (0..u.ncols())
            .into_par_iter()
            .map_init(Vec::new, |scratch, j| self.evaluate(model, u.column(j).as_slice(), scratch).1)
            .collect();
        DMatrix::from_fn(u.nrows(), u.ncols(), |k, j| cols[j][k])
    }
}

fn upper_times(l: &DMatrix<f64>, u: &[f64]) -> Vec<f64> {
    let n = u.len();
    (0..n).map(|i| (i..n).map(|j| l[(i, j)] * u[j]).sum()).collect()
}

/// [`weighted_average`] over the columns `index` of `values`.
fn indexed_average(exps: &[f64], index: &[usize], values: &DMatrix<f64>, out: &mut [f64]) -> f64 {
    let max = exps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    out.iter_mut().for_each(|v| *v = 0.0);
    let mut sum = 0.0;
    for (e, &l) in exps.iter().zip(index) {
        let w = (e - max).exp();
        sum += w;
        for (o, v) in out.iter_mut().zip(values.column(l).iter()) {
            *o += w * v;
        }
    }
    out.iter_mut().for_each(|v| *v /= sum);
    max + sum.ln()
}

/// Softmax-weighted average of `values` (stride `dim`) with log-weights
/// `exps`; writes the average to `out` and returns `log Σ exp`.
pub(crate) fn weighted_average(exps: &[f64], values: &[f64], dim: usize, out: &mut [f64]) -> f64 {
    let max = exps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    out.iter_mut().for_each(|v| *v = 0.0);
    let mut sum = 0.0;
    for (e, v) in exps.iter().zip(values.chunks_exact(dim)) {
        let w = (e - max).exp();
        sum += w;
        for k in 0..dim {
            out[k] += w * v[k];
        }
    }
    out.iter_mut().for_each(|v| *v /= sum);
    max + sum.ln()
}

/// Posterior drift `L(u) = ∇ log p(u)` applied column-wise.
pub fn posterior_drift(model: &PosteriorDensityModel, cache: &DriftCache, u: &DMatrix<f64>) -> DMatrix<f64> {
    cache.drift(model, u)
}

/// A drift field in reduced parameter coordinates.
pub trait DriftField: Sync {
    fn dim(&self) -> usize;

    /// Drift of each column of a `dim × N` state.
    fn drift(&self, u: &DMatrix<f64>) -> DMatrix<f64>;

    fn drift_at(&self, u: &DVector<f64>) -> DVector<f64> {
        self.drift(&DMatrix::from_column_slice(u.len(), 1, u.as_slice())).column(0).into_owned()
    }
}

/// The kernel-density posterior as a drift field.
pub struct KdePosterior<'a> {
    pub model: &'a PosteriorDensityModel,
    pub cache: &'a DriftCache,
}

impl KdePosterior<'_> {
    /// `J(u)` and `L(u)`.
    pub fn value_and_gradient(&self, u: &DVector<f64>) -> (f64, DVector<f64>) {
        let (v, g) = self.cache.evaluate(self.model, u.as_slice(), &mut Vec::new());
        (v, DVector::from_vec(g))
    }
}

impl DriftField for KdePosterior<'_> {
    fn dim(&self) -> usize {
        self.model.nu_w
    }

    fn drift(&self, u: &DMatrix<f64>) -> DMatrix<f64> {
        self.cache.drift(self.model, u)
    }
}

/// Gaussian drift `L(u) = −P (u − mean)`.
#[derive(Debug, Clone)]
pub struct GaussianDrift {
    pub precision: DMatrix<f64>,
    pub mean: DVector<f64>,
}

impl DriftField for GaussianDrift {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn drift(&self, u: &DMatrix<f64>) -> DMatrix<f64> {
        let mut centered = u.clone();
        for mut c in centered.column_iter_mut() {
            c -= &self.mean;
        }
        -(&self.precision * centered)
    }
}
