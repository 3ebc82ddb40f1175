//! Small-data Bayesian posterior sampling with probabilistic learning on
//! manifolds.
//!
//! The pipeline learns a large synthetic dataset of `(Q, W)` pairs from a
//! small training set ([`learning`]), reduces each block by PCA
//! ([`reduction`]), builds a regularized Gaussian kernel-density model of the
//! reduced joint distribution ([`density`]), and samples the posterior of the
//! parameters given experimental QoI observations with a dissipative
//! Hamiltonian ISDE ([`posterior`]). [`validation`] compares marginals,
//! [`synthetic`] generates the benchmark problems and [`pipeline`] drives
//! everything from a configuration file.

// `!(x > 0.0)` is used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod datasets;
pub mod density;
pub mod error;
pub mod integrator;
pub mod learning;
pub mod linalg;
pub mod pipeline;
pub mod posterior;
pub mod reduction;
pub mod rng;
pub mod synthetic;
pub mod validation;

pub use error::{Error, Result};
