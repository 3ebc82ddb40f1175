//! Marginal densities and the validation metrics comparing posterior,
//! prior and experimental parameter samples.

use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Grid size of the marginal curves.
pub const DEFAULT_GRID_POINTS: usize = 512;
/// Grid margin beyond the pooled sample range, in bandwidths.
pub const GRID_MARGIN_BANDWIDTHS: f64 = 3.0;
const KERNEL_WINDOW: f64 = 9.0;

/// Kernel density estimate of one component on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalPdfCurve {
    pub component: usize,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
}

impl MarginalPdfCurve {
    pub fn integral(&self) -> f64 {
        trapezoid(&self.grid, &self.values)
    }
}

fn mean_std(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// One-dimensional Silverman bandwidth `σ (4 / 3n)^{1/5}`.
pub fn silverman_bandwidth_1d(samples: &[f64]) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::InvalidData("bandwidth needs at least two samples".into()));
    }
    let (_, sd) = mean_std(samples);
    if !(sd > 0.0) || !sd.is_finite() {
        return Err(Error::InvalidData("samples have zero or non-finite spread".into()));
    }
    Ok(sd * (4.0 / (3.0 * samples.len() as f64)).powf(0.2))
}

/// Gaussian kernel estimate with the Silverman bandwidth, evaluated on `grid`.
pub fn marginal_kde_1d(component: usize, samples: &[f64], grid: &[f64]) -> Result<MarginalPdfCurve> {
    if samples.len() < 10 {
        return Err(Error::InvalidData(format!(
            "component {component}: marginal estimate needs at least 10 samples, got {}",
            samples.len()
        )));
    }
    let h = silverman_bandwidth_1d(samples).map_err(|e| match e {
        Error::InvalidData(m) => Error::InvalidData(format!("component {component}: {m}")),
        other => other,
    })?;
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let norm = 1.0 / (sorted.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    let values = grid
        .iter()
        .map(|&x| {
            let lo = sorted.partition_point(|&s| s < x - KERNEL_WINDOW * h);
            let hi = sorted.partition_point(|&s| s <= x + KERNEL_WINDOW * h);
            sorted[lo..hi].iter().map(|&s| (-0.5 * ((x - s) / h).powi(2)).exp()).sum::<f64>() * norm
        })
        .collect();
    Ok(MarginalPdfCurve {
        component,
        grid: grid.to_vec(),
        values,
    })
}

/// `points` equally spaced abscissae spanning the pooled range of the sets
/// extended by three of the largest bandwidth.
pub fn default_grid(sets: &[&[f64]], points: usize) -> Result<Vec<f64>> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut h: f64 = 0.0;
    for s in sets {
        for &x in *s {
            lo = lo.min(x);
            hi = hi.max(x);
        }
        h = h.max(silverman_bandwidth_1d(s)?);
    }
    if points < 2 || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidData("grid needs finite samples and at least two points".into()));
    }
    let a = lo - GRID_MARGIN_BANDWIDTHS * h;
    let b = hi + GRID_MARGIN_BANDWIDTHS * h;
    let step = (b - a) / (points - 1) as f64;
    Ok((0..points).map(|i| a + i as f64 * step).collect())
}

pub fn trapezoid(grid: &[f64], values: &[f64]) -> f64 {
    grid.windows(2)
        .zip(values.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .sum()
}

/// `(1/n_w) Σ_k ∫|p_k^post − p_k^exper| / ∫ p_k^exper`.
pub fn ovl_error(post: &[MarginalPdfCurve], exper: &[MarginalPdfCurve]) -> Result<f64> {
    if post.is_empty() || post.len() != exper.len() {
        return Err(Error::DimensionMismatch(format!(
            "OVL needs matching non-empty curve families, got {} and {}",
            post.len(),
            exper.len()
        )));
    }
    let mut total = 0.0;
    for (p, e) in post.iter().zip(exper) {
        if p.grid != e.grid {
            return Err(Error::DimensionMismatch(format!(
                "component {}: posterior and experimental grids differ",
                e.component
            )));
        }
        let diff: Vec<f64> = p.values.iter().zip(&e.values).map(|(a, b)| (a - b).abs()).collect();
        total += trapezoid(&e.grid, &diff) / e.integral();
    }
    Ok(total / post.len() as f64)
}

/// `‖σ^post‖ / ‖σ^exper‖` with per-row sample standard deviations.
pub fn conv_std(post: &DMatrix<f64>, exper: &DMatrix<f64>) -> Result<f64> {
    if post.nrows() != exper.nrows() || post.ncols() < 2 || exper.ncols() < 2 {
        return Err(Error::DimensionMismatch(format!(
            "conv_std needs equal component counts and ≥ 2 samples, got {}×{} and {}×{}",
            post.nrows(),
            post.ncols(),
            exper.nrows(),
            exper.ncols()
        )));
    }
    let norm = |m: &DMatrix<f64>| {
        m.row_iter()
            .map(|r| {
                let v: Vec<f64> = r.iter().copied().collect();
                mean_std(&v).1.powi(2)
            })
            .sum::<f64>()
            .sqrt()
    };
    let d = norm(exper);
    if !(d > 0.0) {
        return Err(Error::InvalidData("experimental standard deviations are all zero".into()));
    }
    Ok(norm(post) / d)
}

/// Marginal curves of the training, experimental and posterior parameter
/// samples on shared per-component grids.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalFamilies {
    pub training: Vec<MarginalPdfCurve>,
    pub experimental: Vec<MarginalPdfCurve>,
    pub posterior: Vec<MarginalPdfCurve>,
}

impl MarginalFamilies {
    pub fn build(training: &DMatrix<f64>, experimental: &DMatrix<f64>, posterior: &DMatrix<f64>) -> Result<Self> {
        let n = experimental.nrows();
        if training.nrows() != n || posterior.nrows() != n {
            return Err(Error::DimensionMismatch(format!(
                "parameter dimensions differ: {}, {n}, {}",
                training.nrows(),
                posterior.nrows()
            )));
        }
        let row = |m: &DMatrix<f64>, k: usize| -> Vec<f64> { m.row(k).iter().copied().collect() };
        let per: Vec<[MarginalPdfCurve; 3]> = (0..n)
            .into_par_iter()
            .map(|k| {
                let (d, e, p) = (row(training, k), row(experimental, k), row(posterior, k));
                let grid = default_grid(&[&d, &e, &p], DEFAULT_GRID_POINTS)?;
                Ok([
                    marginal_kde_1d(k, &d, &grid)?,
                    marginal_kde_1d(k, &e, &grid)?,
                    marginal_kde_1d(k, &p, &grid)?,
                ])
            })
            .collect::<Result<_>>()?;
        let mut out = MarginalFamilies {
            training: Vec::with_capacity(n),
            experimental: Vec::with_capacity(n),
            posterior: Vec::with_capacity(n),
        };
        for [d, e, p] in per {
            out.training.push(d);
            out.experimental.push(e);
            out.posterior.push(p);
        }
        Ok(out)
    }

    pub fn ovl_posterior(&self) -> Result<f64> {
        ovl_error(&self.posterior, &self.experimental)
    }

    /// The same metric with the training curves in place of the posterior.
    pub fn ovl_prior(&self) -> Result<f64> {
        ovl_error(&self.training, &self.experimental)
    }
}

/// One row of an ε or `N_d` sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub parameter: f64,
    pub seed: u64,
    pub ovl: Option<f64>,
    pub conv_std: Option<f64>,
    pub ovl_prior: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CurveRow {
    component: usize,
    w: f64,
    p_training: f64,
    p_experimental: f64,
    p_posterior: f64,
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            line: 0,
            message: format!("{}: {other:?}", path.display()),
        },
    }
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    csv::Writer::from_path(path).map_err(|e| csv_error(path, e))
}

/// Writes the three marginal families as `component,w,p_training,p_experimental,p_posterior`.
pub fn write_curves_csv(families: &MarginalFamilies, path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    for ((d, e), p) in families.training.iter().zip(&families.experimental).zip(&families.posterior) {
        for i in 0..d.grid.len() {
            w.serialize(CurveRow {
                component: d.component,
                w: d.grid[i],
                p_training: d.values[i],
                p_experimental: e.values[i],
                p_posterior: p.values[i],
            })
            .map_err(|e| csv_error(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_sweep_csv(rows: &[SweepRow], path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    if rows.is_empty() {
        w.write_record(["parameter", "seed", "ovl", "conv_std", "ovl_prior", "error"])
            .map_err(|e| csv_error(path, e))?;
    }
    for r in rows {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_sweep_csv(path: &Path) -> Result<Vec<SweepRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_error(path, e))).collect()
}

/// Writes `marginals.csv` and, when rows are given, `sweep.csv` into `dir`.
pub fn export_validation_report(families: Option<&MarginalFamilies>, rows: &[SweepRow], dir: &Path) -> Result<()> {
    if let Some(f) = families {
        write_curves_csv(f, &dir.join("marginals.csv"))?;
    }
    write_sweep_csv(rows, &dir.join("sweep.csv"))
}
