//! Generators for the two synthetic validation problems.
//!
//! Training model `Q = B(U) (W + V b)` with `W = Σ_{β≤3} √μ_β φ^β η_β`, where
//! `η` is a 27-term Hermite chaos in two standard normals with orthonormal
//! coefficient rows. The experimental model uses a different `U` spread
//! (AP1 only) and shifts `W` by `0.2` in every component.
//!
//! The chaos uses orthonormal probabilists' Hermite polynomials
//! `ψ_k = He_k / √k!`, which makes `cov(η) = y yᵀ = I`. Index pairs
//! `(α_1, α_2)` with `0 < α_1 + α_2 ≤ 6` are ordered by total degree, then by
//! decreasing `α_1`.

use nalgebra::{DMatrix, DVector, Vector3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datasets::{ExperimentalDataset, RawDataset};
use crate::error::{Error, Result};
use crate::linalg::sorted_symmetric_eigen;
use crate::rng::{self, domain};

pub const CHAOS_TERMS: usize = 27;
pub const CHAOS_MAX_DEGREE: usize = 6;
/// Shift of every experimental parameter component.
pub const EXPERIMENTAL_W_SHIFT: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Ap1,
    Ap2,
}

/// Dimensions and seed of a synthetic problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApConfig {
    pub variant: Variant,
    pub n_q: usize,
    #[serde(default = "default_n_w")]
    pub n_w: usize,
    #[serde(default = "default_n_u")]
    pub n_u: usize,
    pub n_d: usize,
    pub n_r: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_n_w() -> usize {
    20
}

fn default_n_u() -> usize {
    6
}

impl ApConfig {
    pub fn ap1(seed: u64) -> Self {
        Self {
            variant: Variant::Ap1,
            n_q: 200,
            n_w: 20,
            n_u: 6,
            n_d: 200,
            n_r: 200,
            seed,
        }
    }

    pub fn ap2(seed: u64) -> Self {
        Self {
            variant: Variant::Ap2,
            n_q: 20_000,
            ..Self::ap1(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.n_q.is_multiple_of(2) || self.n_w == 0 || self.n_w > self.n_q / 2 {
            return Err(Error::Config(format!(
                "synthetic model needs even n_q ≥ 2 n_w, got n_q = {}, n_w = {}",
                self.n_q, self.n_w
            )));
        }
        if self.n_u < 2 || self.n_d < 2 || self.n_r < 2 {
            return Err(Error::Config("n_u, N_d and n_r must be at least 2".into()));
        }
        Ok(())
    }

    /// Spread coefficient of the training `U`.
    pub fn u_slope(&self) -> f64 {
        match self.variant {
            Variant::Ap1 => 0.2,
            Variant::Ap2 => 0.7,
        }
    }

    /// Spread coefficient of the experimental `U`.
    pub fn u_slope_experimental(&self) -> f64 {
        match self.variant {
            Variant::Ap1 => 0.3,
            Variant::Ap2 => 0.7,
        }
    }

    /// `V = 0.2 U + offset`.
    pub fn v_offset(&self) -> f64 {
        match self.variant {
            Variant::Ap1 => 0.9,
            Variant::Ap2 => -0.1,
        }
    }
}

/// Orthonormal Hermite values `ψ_0(x), …, ψ_max(x)`.
pub fn hermite_normalized(x: f64, max_degree: usize) -> Vec<f64> {
    let mut he = vec![1.0; max_degree + 1];
    if max_degree >= 1 {
        he[1] = x;
    }
    for k in 1..max_degree {
        he[k + 1] = x * he[k] - k as f64 * he[k - 1];
    }
    let mut fact = 1.0;
    for (k, v) in he.iter_mut().enumerate() {
        if k > 0 {
            fact *= k as f64;
        }
        *v /= fact.sqrt();
    }
    he
}

/// Index pairs with `0 < α_1 + α_2 ≤ 6` in graded order.
pub fn chaos_indices() -> Vec<(usize, usize)> {
    (1..=CHAOS_MAX_DEGREE)
        .flat_map(|d| (0..=d).rev().map(move |a1| (a1, d - a1)))
        .collect()
}

/// Coefficients `y` (`3 × 27`, orthonormal rows) and index pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct ChaosExpansion {
    pub y: DMatrix<f64>,
    pub indices: Vec<(usize, usize)>,
}

impl ChaosExpansion {
    /// `y` from the eigenvectors of the three smallest eigenvalues of
    /// `a aᵀ`, `a` a `27 × 27` standard normal matrix.
    pub fn random(rng: &mut ChaCha8Rng) -> Self {
        let a = rng::standard_normal_matrix(rng, CHAOS_TERMS, CHAOS_TERMS);
        let (_, vecs) = sorted_symmetric_eigen(&(&a * a.transpose()));
        let y = DMatrix::from_fn(3, CHAOS_TERMS, |i, j| vecs[(j, CHAOS_TERMS - 1 - i)]);
        Self {
            y,
            indices: chaos_indices(),
        }
    }

    pub fn sample_eta(&self, xi: (f64, f64)) -> Vector3<f64> {
        let p1 = hermite_normalized(xi.0, CHAOS_MAX_DEGREE);
        let p2 = hermite_normalized(xi.1, CHAOS_MAX_DEGREE);
        let mut eta = Vector3::zeros();
        for (g, &(a1, a2)) in self.indices.iter().enumerate() {
            let psi = p1[a1] * p2[a2];
            for i in 0..3 {
                eta[i] += self.y[(i, g)] * psi;
            }
        }
        eta
    }
}

/// Seed-dependent deterministic quantities of a synthetic problem.
#[derive(Debug, Clone, PartialEq)]
pub struct DeterministicInputs {
    /// `b = 0.2 u + 0.9`, `u` uniform.
    pub b: DVector<f64>,
    pub chaos: ChaosExpansion,
    /// Columns `φ^β_j = sin(β π j / (1 + n_w))`, `β = 1, 2, 3`.
    pub phi: DMatrix<f64>,
    /// `μ_β = 1/β²`.
    pub mu: [f64; 3],
}

pub fn build_deterministic_inputs(cfg: &ApConfig) -> DeterministicInputs {
    let mut r = rng::stream(cfg.seed, domain::SYNTHETIC_INPUTS, 0);
    let b = DVector::from_fn(cfg.n_w, |_, _| 0.2 * r.random::<f64>() + 0.9);
    let mut r = rng::stream(cfg.seed, domain::SYNTHETIC_INPUTS, 1);
    let chaos = ChaosExpansion::random(&mut r);
    let phi = DMatrix::from_fn(cfg.n_w, 3, |j, beta| {
        ((beta + 1) as f64 * std::f64::consts::PI * (j + 1) as f64 / (1 + cfg.n_w) as f64).sin()
    });
    DeterministicInputs {
        b,
        chaos,
        phi,
        mu: [1.0, 0.25, 1.0 / 9.0],
    }
}

/// `[B(u)]_{kj} = Σ_α λ_α(u_α) φ_k^α(u_α)² φ_{j+n_q/2}^α(u_α)`.
pub fn b_matrix(variant: Variant, n_q: usize, n_w: usize, u: &[f64]) -> DMatrix<f64> {
    let c = std::f64::consts::PI / (n_q + 1) as f64;
    let mut b = DMatrix::zeros(n_q, n_w);
    for (ai, &ua) in u.iter().enumerate() {
        let alpha = (ai + 1) as f64;
        let (freq, lambda) = match variant {
            Variant::Ap1 => (alpha * c, 1.0 / (alpha * ua).powi(2)),
            Variant::Ap2 => (alpha * ua * c, 5.0 * (1.0 - ua) + 1.0 / (alpha * ua).powi(2)),
        };
        let right: Vec<f64> = (0..n_w).map(|j| (freq * (j + 1 + n_q / 2) as f64).sin()).collect();
        for k in 0..n_q {
            let left = lambda * (freq * (k + 1) as f64).sin().powi(2);
            for (j, r) in right.iter().enumerate() {
                b[(k, j)] += left * r;
            }
        }
    }
    b
}

/// `W = Σ_β √μ_β φ^β η_β` from a fresh pair of standard normals.
pub fn sample_w(inputs: &DeterministicInputs, rng: &mut ChaCha8Rng) -> DVector<f64> {
    let xi = (rng.sample(StandardNormal), rng.sample(StandardNormal));
    let eta = inputs.chaos.sample_eta(xi);
    let mut w = DVector::zeros(inputs.phi.nrows());
    for beta in 0..3 {
        w += inputs.phi.column(beta) * (inputs.mu[beta].sqrt() * eta[beta]);
    }
    w
}

fn sample_pair(
    cfg: &ApConfig,
    inputs: &DeterministicInputs,
    slope_of: impl Fn(usize) -> f64,
    w_shift: f64,
    rng: &mut ChaCha8Rng,
) -> (DVector<f64>, DVector<f64>, f64) {
    let n_u = cfg.n_u;
    let u: Vec<f64> = (0..n_u)
        .map(|a| {
            let ua = slope_of(a);
            2.0 * ua * rng.random::<f64>() + 1.0 - ua
        })
        .collect();
    let v = 0.2 * rng.random::<f64>() + cfg.v_offset();
    let w = sample_w(inputs, rng).add_scalar(w_shift);
    let b = b_matrix(cfg.variant, cfg.n_q, cfg.n_w, &u);
    let q = b * (&w + &inputs.b * v);
    (q, w, v)
}

fn slope(coefficient: f64, n_u: usize) -> impl Fn(usize) -> f64 {
    move |a| coefficient * a as f64 / (n_u - 1) as f64
}

/// One training realization `(q, w)`.
pub fn sample_training_pair(cfg: &ApConfig, inputs: &DeterministicInputs, rng: &mut ChaCha8Rng) -> (DVector<f64>, DVector<f64>) {
    let (q, w, _) = sample_pair(cfg, inputs, slope(cfg.u_slope(), cfg.n_u), 0.0, rng);
    (q, w)
}

/// One experimental realization `(q, w)` and its `V`.
pub fn sample_experimental_pair(
    cfg: &ApConfig,
    inputs: &DeterministicInputs,
    rng: &mut ChaCha8Rng,
) -> (DVector<f64>, DVector<f64>, f64) {
    sample_pair(cfg, inputs, slope(cfg.u_slope_experimental(), cfg.n_u), EXPERIMENTAL_W_SHIFT, rng)
}

fn assemble(n_q: usize, n_w: usize, pairs: Vec<(DVector<f64>, DVector<f64>)>) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut q = DMatrix::zeros(n_q, pairs.len());
    let mut w = DMatrix::zeros(n_w, pairs.len());
    for (j, (qj, wj)) in pairs.into_iter().enumerate() {
        q.set_column(j, &qj);
        w.set_column(j, &wj);
    }
    (q, w)
}

/// `N_d` training realizations; realization `j` uses its own stream, so a
/// smaller `N_d` yields a prefix of a larger one.
pub fn generate_training(cfg: &ApConfig, inputs: &DeterministicInputs) -> Result<RawDataset> {
    cfg.validate()?;
    let pairs: Vec<_> = (0..cfg.n_d)
        .into_par_iter()
        .map(|j| sample_training_pair(cfg, inputs, &mut rng::stream(cfg.seed, domain::SYNTHETIC_TRAINING, j as u64)))
        .collect();
    let (q, w) = assemble(cfg.n_q, cfg.n_w, pairs);
    RawDataset::from_blocks(&q, &w)
}

/// Experimental outputs and the matching parameters kept for validation.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentalData {
    pub dataset: ExperimentalDataset,
    pub w: DMatrix<f64>,
}

pub fn generate_experimental(cfg: &ApConfig, inputs: &DeterministicInputs) -> Result<ExperimentalData> {
    cfg.validate()?;
    let pairs: Vec<_> = (0..cfg.n_r)
        .into_par_iter()
        .map(|r| {
            let (q, w, _) =
                sample_experimental_pair(cfg, inputs, &mut rng::stream(cfg.seed, domain::SYNTHETIC_EXPERIMENTAL, r as u64));
            (q, w)
        })
        .collect();
    let (q, w) = assemble(cfg.n_q, cfg.n_w, pairs);
    Ok(ExperimentalData {
        dataset: ExperimentalDataset::new(q)?,
        w,
    })
}
