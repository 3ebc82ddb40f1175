use nalgebra::{DMatrix, DVector};

use super::drift::{weighted_average, DriftCache, KdePosterior};
use crate::density::model_quad;
use crate::density::PosteriorDensityModel;

/// Closed-form conditional mean of `Ŵ` given `Q̂ = q̄̂^exper`.
pub fn predictor_mean(model: &PosteriorDensityModel, _cache: &DriftCache) -> DVector<f64> {
    let nu_w = model.nu_w;
    let q_bar = crate::linalg::column_mean(&model.exp_q);
    let inv = 1.0 / (2.0 * model.s_ar * model.s_ar);
    let shift_map = &model.g_w_inv * model.g_qw.transpose();
    let mut exps = Vec::with_capacity(model.nu_ar());
    let mut values = Vec::with_capacity(model.nu_ar() * nu_w);
    for c in model.centers.column_iter() {
        let dq = DVector::from_fn(model.nu_q, |k, _| q_bar[k] - c[k]);
        exps.push(-model_quad(&model.l_1, dq.as_slice()) * inv);
        let w2 = c.rows(model.nu_q, nu_w) - &shift_map * &dq;
        values.extend(w2.iter());
    }
    let mut out = vec![0.0; nu_w];
    weighted_average(&exps, &values, nu_w, &mut out);
    DVector::from_vec(out)
}

/// Outcome of the corrector optimization.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectorResult {
    pub mode: DVector<f64>,
    pub value: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Maximum number of quasi-Newton iterations.
pub const CORRECTOR_MAX_ITER: usize = 500;
/// Relative gradient tolerance `‖∇J‖ ≤ tol (1 + |J|)`.
pub const CORRECTOR_TOL: f64 = 1e-6;

/// Local maximizer of `J` by BFGS ascent with backtracking line search.
pub fn corrector_mode(model: &PosteriorDensityModel, cache: &DriftCache, init: &DVector<f64>) -> CorrectorResult {
    let field = KdePosterior { model, cache };
    let eval = |x: &DVector<f64>| field.value_and_gradient(x);
    bfgs_maximize(eval, init.clone(), CORRECTOR_MAX_ITER, CORRECTOR_TOL)
}

/// Maximizes `f` given a function returning `(f(x), ∇f(x))`.
pub fn bfgs_maximize<F>(f: F, x0: DVector<f64>, max_iter: usize, tol: f64) -> CorrectorResult
where
    F: Fn(&DVector<f64>) -> (f64, DVector<f64>),
{
    let n = x0.len();
    let mut x = x0;
    let (mut fx, mut g) = f(&x);
    let mut h = DMatrix::<f64>::identity(n, n);
    let mut scaled = false;
    let done = |fx: f64, g: &DVector<f64>| g.norm() <= tol * (1.0 + fx.abs());
    let mut iterations = 0;
    while iterations < max_iter && !done(fx, &g) {
        iterations += 1;
        let mut p = &h * &g;
        if p.dot(&g) <= 0.0 {
            h = DMatrix::identity(n, n);
            p = g.clone();
        }
        let slope = p.dot(&g);
        let mut step = 1.0;
        let accepted = loop {
            let xn = &x + &p * step;
            let (fn_, gn) = f(&xn);
            if fn_.is_finite() && fn_ >= fx + 1e-4 * step * slope {
                break Some((xn, fn_, gn));
            }
            step *= 0.5;
            if step < 1e-20 {
                break None;
            }
        };
        let Some((xn, fn_, gn)) = accepted else {
            log::warn!("corrector line search stalled after {iterations} iterations");
            break;
        };
        // Ascent on f is descent on −f: s = Δx, y = −Δg.
        let s = &xn - &x;
        let y = &g - &gn;
        let sy = s.dot(&y);
        if sy > 1e-300 {
            if !scaled {
                h *= sy / y.dot(&y);
                scaled = true;
            }
            let rho = 1.0 / sy;
            let i = DMatrix::<f64>::identity(n, n);
            let left = &i - &s * y.transpose() * rho;
            let right = &i - &y * s.transpose() * rho;
            h = &left * &h * &right + &s * s.transpose() * rho;
        }
        x = xn;
        fx = fn_;
        g = gn;
    }
    let converged = done(fx, &g);
    if !converged {
        log::warn!(
            "corrector did not converge: |∇J| = {:.3e} after {iterations} iterations",
            g.norm()
        );
    }
    CorrectorResult {
        gradient_norm: g.norm(),
        mode: x,
        value: fx,
        iterations,
        converged,
    }
}
