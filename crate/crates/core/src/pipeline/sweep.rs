use std::path::{Path, PathBuf};

use super::{generate_with, learn, posterior, reduce, validate, Layout, RunConfig, ValidateSummary};
use crate::error::{Error, Result};
use crate::validation::{write_sweep_csv, SweepRow};

fn row(parameter: f64, seed: u64, result: Result<ValidateSummary>) -> SweepRow {
    match result {
        Ok(v) => SweepRow {
            parameter,
            seed,
            ovl: Some(v.ovl),
            conv_std: Some(v.conv_std),
            ovl_prior: Some(v.ovl_prior),
            error: None,
        },
        Err(e) => {
            log::warn!("sweep point {parameter} (seed {seed}) failed: {e}");
            SweepRow {
                parameter,
                seed,
                ovl: None,
                conv_std: None,
                ovl_prior: None,
                error: Some(e.to_string()),
            }
        }
    }
}

fn prepare(cfg: &RunConfig, layout: &Layout, n_d: Option<usize>) -> Result<()> {
    generate_with(cfg, layout, n_d).map_err(|e| e.in_stage("generate"))?;
    learn(cfg, layout).map_err(|e| e.in_stage("learn"))?;
    reduce(cfg, layout).map_err(|e| e.in_stage("reduce"))?;
    Ok(())
}

fn posterior_and_validate(cfg: &RunConfig, layout: &Layout) -> Result<ValidateSummary> {
    posterior(cfg, layout).map_err(|e| e.in_stage("posterior"))?;
    validate(cfg, layout).map_err(|e| e.in_stage("validate"))
}

fn sorted(mut rows: Vec<SweepRow>) -> Vec<SweepRow> {
    rows.sort_by(|a, b| a.parameter.total_cmp(&b.parameter).then(a.seed.cmp(&b.seed)));
    rows
}

fn check_sweep(cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    if !cfg.has_experimental_w() {
        return Err(Error::Config("sweeps need the experimental parameter values".into()));
    }
    Ok(())
}

fn sweep_root(cfg: &RunConfig, name: &str, seed: u64) -> PathBuf {
    cfg.out.join(name).join(format!("seed-{seed}"))
}

fn finish(rows: Vec<SweepRow>, path: &Path) -> Result<Vec<SweepRow>> {
    let rows = sorted(rows);
    write_sweep_csv(&rows, path)?;
    Ok(rows)
}

/// Runs the posterior and validation stages for each `ε` of the grid and
/// every sweep seed, sharing the learning of each seed. Rows are ordered by
/// `ε`, then seed, and written to `sweep-eps.csv` in the output directory.
pub fn run_epsilon_sweep(cfg: &RunConfig, eps_grid: &[f64]) -> Result<Vec<SweepRow>> {
    check_sweep(cfg)?;
    let mut rows = Vec::new();
    for seed in cfg.sweep_seeds() {
        let c = cfg.with_seed(seed);
        let root = sweep_root(cfg, "sweep-eps", seed);
        let layout = Layout::new(&root);
        if let Err(e) = prepare(&c, &layout, None) {
            let msg = e.to_string();
            rows.extend(eps_grid.iter().map(|&eps| row(eps, seed, Err(Error::Selection(msg.clone())))));
            continue;
        }
        for &eps in eps_grid {
            let mut ce = c.clone();
            ce.density.epsilon = eps;
            let l = layout.with_posterior_root(&root.join(format!("eps-{eps}")));
            let result = ce.validate().and_then(|_| posterior_and_validate(&ce, &l));
            rows.push(row(eps, seed, result));
        }
    }
    finish(rows, &cfg.out.join("sweep-eps.csv"))
}

/// Runs the whole pipeline on the first `N_d` training samples for each
/// value of the grid and every sweep seed at the configured `ε`. Rows are
/// written to `sweep-nd.csv` in the output directory.
pub fn run_nd_sweep(cfg: &RunConfig, nd_grid: &[usize]) -> Result<Vec<SweepRow>> {
    check_sweep(cfg)?;
    let mut rows = Vec::new();
    for seed in cfg.sweep_seeds() {
        let c = cfg.with_seed(seed);
        for &n_d in nd_grid {
            let layout = Layout::new(&sweep_root(cfg, "sweep-nd", seed).join(format!("nd-{n_d}")));
            let result = prepare(&c, &layout, Some(n_d)).and_then(|_| posterior_and_validate(&c, &layout));
            rows.push(row(n_d as f64, seed, result));
        }
    }
    finish(rows, &cfg.out.join("sweep-nd.csv"))
}
