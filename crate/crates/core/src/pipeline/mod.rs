//! End-to-end orchestration with persisted stage outputs.
//!
//! Every stage reads its inputs from the run directory and writes its
//! outputs there, so any stage can be resumed from the artifacts of the
//! previous ones. A JSON-lines manifest records each completed stage.
//!
//! Layout of a run directory:
//!
//! ```text
//! data/       training.csv, experimental.csv, experimental_w.csv, data.json
//! learn/      scaling.json, learned.csv, learn.json
//! reduce/     pca_q.json, pca_w.json, reduced.csv, experimental_reduced.csv, reduce.json
//! posterior/  w_hat.csv, w_scaled.csv, w.csv, posterior.json
//! validate/   marginals.csv, validate.json
//! manifest.jsonl
//! ```

mod config;
mod sweep;

pub use config::{DataSource, DensitySettings, ReductionSettings, RunConfig, SweepSettings, DEFAULT_EPS_GRID};
pub use sweep::{run_epsilon_sweep, run_nd_sweep};

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::datasets::{self, read_matrix_csv, write_matrix_csv, ExperimentalDataset, RawDataset, ScalingTransform};
use crate::density;
use crate::error::{Error, Result};
use crate::learning::{self, LearningConfig};
use crate::posterior::{self, PosteriorSamplerConfig};
use crate::reduction::{self, BlockPca, ReducedExperimental, ReducedLearnedDataset, WhiteningReport};
use crate::synthetic;
use crate::validation::{self, MarginalFamilies};

/// Pipeline stages in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Generate,
    Learn,
    Reduce,
    Posterior,
    Validate,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Generate, Stage::Learn, Stage::Reduce, Stage::Posterior, Stage::Validate];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Generate => "generate",
            Stage::Learn => "learn",
            Stage::Reduce => "reduce",
            Stage::Posterior => "posterior",
            Stage::Validate => "validate",
        }
    }
}

/// Directories of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub data: PathBuf,
    pub learn: PathBuf,
    pub reduce: PathBuf,
    pub posterior: PathBuf,
    pub validate: PathBuf,
    pub manifest: PathBuf,
}

impl Layout {
    pub fn new(root: &Path) -> Self {
        Self {
            data: root.join("data"),
            learn: root.join("learn"),
            reduce: root.join("reduce"),
            posterior: root.join("posterior"),
            validate: root.join("validate"),
            manifest: root.join("manifest.jsonl"),
        }
    }

    /// Same inputs, posterior and validation outputs under `dir`.
    pub fn with_posterior_root(&self, dir: &Path) -> Self {
        Self {
            posterior: dir.join("posterior"),
            validate: dir.join("validate"),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub n_q: usize,
    pub n_w: usize,
    pub n_d: usize,
    pub n_r: usize,
    pub has_experimental_w: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnSummary {
    pub nu_x: usize,
    pub eps_diff: f64,
    pub m: usize,
    pub dt: f64,
    pub nu_ar: usize,
    /// `(ε, m̂(ε))` table when `ε_diff` was selected automatically.
    pub selection: Option<Vec<(f64, Option<usize>)>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReduceSummary {
    pub nu_q: usize,
    pub nu_w: usize,
    pub err_q: f64,
    pub err_w: f64,
    pub whitening_q: (f64, f64),
    pub whitening_w: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub epsilon: f64,
    pub nu1: usize,
    pub s_ar: f64,
    pub n_s: usize,
    pub ns_criterion: f64,
    /// `(ε_diff, m)` of the projection basis; `None` for the full basis.
    pub projection: Option<(f64, usize)>,
    pub nu_post: usize,
    pub dt: f64,
    pub predictor: Vec<f64>,
    pub mode: Vec<f64>,
    pub corrector_iterations: usize,
    pub corrector_converged: bool,
    pub hessian_step: f64,
    pub k_eigenvalues: (f64, f64),
    pub burn_in_relative_change: Option<f64>,
    pub burn_in_plateau: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidateSummary {
    pub ovl: f64,
    pub ovl_prior: f64,
    pub conv_std: f64,
}

/// Derived hyperparameters of a completed run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub nu_x: Option<usize>,
    pub m: Option<usize>,
    pub eps_diff: Option<f64>,
    pub nu_q: Option<usize>,
    pub nu_w: Option<usize>,
    pub nu1: Option<usize>,
    pub n_s: Option<usize>,
    pub m_post: Option<usize>,
}

/// One manifest line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub stage: String,
    pub version: String,
    pub seed: u64,
    pub details: serde_json::Value,
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::InvalidData(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        line: e.line(),
        message: format!("{}: {e}", path.display()),
    })
}

fn append_manifest<T: Serialize>(layout: &Layout, stage: &str, seed: u64, details: &T) -> Result<()> {
    let entry = ManifestEntry {
        stage: stage.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed,
        details: serde_json::to_value(details).map_err(|e| Error::InvalidData(e.to_string()))?,
    };
    let line = serde_json::to_string(&entry).map_err(|e| Error::InvalidData(e.to_string()))?;
    if let Some(dir) = layout.manifest.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&layout.manifest)
        .map_err(|e| Error::io(&layout.manifest, e))?;
    writeln!(f, "{line}").map_err(|e| Error::io(&layout.manifest, e))
}

/// Reads every manifest line.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Writes the training and experimental datasets, keeping the first `n_d`
/// training samples when given.
pub fn generate_with(cfg: &RunConfig, layout: &Layout, n_d: Option<usize>) -> Result<DataSummary> {
    let (raw, exp, exp_w) = match &cfg.data {
        DataSource::Synthetic(ap) => {
            let ap = synthetic::ApConfig {
                seed: cfg.seed,
                n_d: n_d.unwrap_or(ap.n_d),
                ..ap.clone()
            };
            ap.validate()?;
            let inputs = synthetic::build_deterministic_inputs(&ap);
            let raw = synthetic::generate_training(&ap, &inputs)?;
            let exp = synthetic::generate_experimental(&ap, &inputs)?;
            (raw, exp.dataset, Some(exp.w))
        }
        DataSource::Files {
            training,
            n_q,
            experimental,
            experimental_w,
        } => {
            let cols = read_matrix_csv(training)?;
            let n_w = cols.nrows().checked_sub(*n_q).filter(|&v| v > 0).ok_or_else(|| {
                Error::DimensionMismatch(format!("training has {} rows, n_q = {n_q}", cols.nrows()))
            })?;
            let mut raw = RawDataset::new(*n_q, n_w, cols)?;
            if let Some(n) = n_d {
                raw = raw.truncated(n)?;
            }
            let exp = ExperimentalDataset::new(read_matrix_csv(experimental)?)?;
            if exp.n_q() != *n_q {
                return Err(Error::DimensionMismatch(format!(
                    "experimental data has {} rows, n_q = {n_q}",
                    exp.n_q()
                )));
            }
            let exp_w = experimental_w.as_ref().map(read_matrix_csv).transpose()?;
            if let Some(w) = &exp_w {
                if w.nrows() != n_w || w.ncols() != exp.n_r() {
                    return Err(Error::DimensionMismatch(format!(
                        "experimental w is {}×{}, expected {n_w}×{}",
                        w.nrows(),
                        w.ncols(),
                        exp.n_r()
                    )));
                }
            }
            (raw, exp, exp_w)
        }
    };
    write_matrix_csv(raw.columns(), layout.data.join("training.csv"))?;
    write_matrix_csv(exp.columns(), layout.data.join("experimental.csv"))?;
    if let Some(w) = &exp_w {
        write_matrix_csv(w, layout.data.join("experimental_w.csv"))?;
    }
    let summary = DataSummary {
        n_q: raw.n_q(),
        n_w: raw.n_w(),
        n_d: raw.n_samples(),
        n_r: exp.n_r(),
        has_experimental_w: exp_w.is_some(),
    };
    write_json(&summary, &layout.data.join("data.json"))?;
    append_manifest(layout, "generate", cfg.seed, &summary)?;
    Ok(summary)
}

fn load_training(layout: &Layout) -> Result<(DataSummary, RawDataset)> {
    let info: DataSummary = read_json(&layout.data.join("data.json"))?;
    let raw = RawDataset::new(info.n_q, info.n_w, read_matrix_csv(layout.data.join("training.csv"))?)?;
    Ok((info, raw))
}

fn learning_config(cfg: &RunConfig) -> LearningConfig {
    LearningConfig {
        seed: cfg.seed,
        ..cfg.learning.clone()
    }
}

fn posterior_config(cfg: &RunConfig) -> PosteriorSamplerConfig {
    PosteriorSamplerConfig {
        seed: cfg.seed,
        ..cfg.posterior.clone()
    }
}

pub fn learn(cfg: &RunConfig, layout: &Layout) -> Result<LearnSummary> {
    let (_, raw) = load_training(layout)?;
    let scaling = datasets::fit_scaling(&raw)?;
    let scaled = datasets::scale(&raw, &scaling)?;
    let out = learning::learn(&scaled.columns, &learning_config(cfg))?;
    write_json(&scaling, &layout.learn.join("scaling.json"))?;
    write_matrix_csv(&out.learned.columns, layout.learn.join("learned.csv"))?;
    let summary = LearnSummary {
        nu_x: out.norm.nu_x(),
        eps_diff: out.basis.eps_diff,
        m: out.basis.m(),
        dt: out.learned.dt,
        nu_ar: out.learned.nu_ar(),
        selection: out.selection.map(|s| s.table),
    };
    write_json(&summary, &layout.learn.join("learn.json"))?;
    append_manifest(layout, "learn", cfg.seed, &summary)?;
    Ok(summary)
}

fn whitening_pair(r: WhiteningReport) -> (f64, f64) {
    (r.mean_norm, r.cov_deviation)
}

pub fn reduce(cfg: &RunConfig, layout: &Layout) -> Result<ReduceSummary> {
    let info: DataSummary = read_json(&layout.data.join("data.json"))?;
    let scaling: ScalingTransform = read_json(&layout.learn.join("scaling.json"))?;
    let learned = read_matrix_csv(layout.learn.join("learned.csv"))?;
    let model = reduction::reduce(&learned, info.n_q, cfg.reduction.eps_q, cfg.reduction.eps_w)?;
    let wq = reduction::whitening_report(&model.learned.q_block())?;
    let ww = reduction::whitening_report(&model.learned.w_block())?;
    if !wq.passes() || !ww.passes() {
        return Err(Error::Numerical(format!(
            "reduced learned blocks are not whitened: q {wq:?}, w {ww:?}"
        )));
    }
    let exp = ExperimentalDataset::new(read_matrix_csv(layout.data.join("experimental.csv"))?)?;
    let exp_scaled = datasets::scale_experimental(&exp, &scaling)?;
    let rexp = reduction::project_experimental(&model.pca_q, &exp_scaled)?;
    write_json(&model.pca_q, &layout.reduce.join("pca_q.json"))?;
    write_json(&model.pca_w, &layout.reduce.join("pca_w.json"))?;
    write_matrix_csv(&model.learned.columns, layout.reduce.join("reduced.csv"))?;
    write_matrix_csv(&rexp.columns, layout.reduce.join("experimental_reduced.csv"))?;
    let summary = ReduceSummary {
        nu_q: model.learned.nu_q,
        nu_w: model.learned.nu_w,
        err_q: model.pca_q.err,
        err_w: model.pca_w.err,
        whitening_q: whitening_pair(wq),
        whitening_w: whitening_pair(ww),
    };
    write_json(&summary, &layout.reduce.join("reduce.json"))?;
    append_manifest(layout, "reduce", cfg.seed, &summary)?;
    Ok(summary)
}

pub fn posterior(cfg: &RunConfig, layout: &Layout) -> Result<PosteriorSummary> {
    let info: DataSummary = read_json(&layout.data.join("data.json"))?;
    let red: ReduceSummary = read_json(&layout.reduce.join("reduce.json"))?;
    let scaling: ScalingTransform = read_json(&layout.learn.join("scaling.json"))?;
    let pca_w: BlockPca = read_json(&layout.reduce.join("pca_w.json"))?;
    let reduced = ReducedLearnedDataset::new(red.nu_q, red.nu_w, read_matrix_csv(layout.reduce.join("reduced.csv"))?)?;
    let rexp = ReducedExperimental {
        columns: read_matrix_csv(layout.reduce.join("experimental_reduced.csv"))?,
    };
    let epsilon = cfg.density.epsilon;
    let cov = density::empirical_block_covariance(&reduced)?;
    let reg = density::regularize_covariance(&cov, epsilon)?;
    let model = density::build_density_model(&reg, &reduced, &rexp)?;
    let run = posterior::run_posterior(&model, &reduced.w_block(), info.n_d, &posterior_config(cfg))?;
    let samples = posterior::map_to_original(&run.chain.w_hat, &pca_w, &scaling)?;
    write_matrix_csv(&samples.w_hat, layout.posterior.join("w_hat.csv"))?;
    write_matrix_csv(&samples.w_scaled, layout.posterior.join("w_scaled.csv"))?;
    write_matrix_csv(&samples.w, layout.posterior.join("w.csv"))?;
    let k_eigs = run.map.k.clone().symmetric_eigen().eigenvalues;
    let summary = PosteriorSummary {
        epsilon,
        nu1: reg.nu1,
        s_ar: model.s_ar,
        n_s: run.n_s.n_s,
        ns_criterion: run.n_s.criterion,
        projection: run.projection,
        nu_post: samples.w.ncols(),
        dt: run.dt,
        predictor: run.predictor.iter().copied().collect(),
        mode: run.corrector.mode.iter().copied().collect(),
        corrector_iterations: run.corrector.iterations,
        corrector_converged: run.corrector.converged,
        hessian_step: run.hessian.accepted_step,
        k_eigenvalues: (k_eigs.min(), k_eigs.max()),
        burn_in_relative_change: run.chain.burn_in.as_ref().map(|b| b.relative_change),
        burn_in_plateau: run.chain.burn_in.as_ref().map(|b| b.plateau),
    };
    write_json(&summary, &layout.posterior.join("posterior.json"))?;
    append_manifest(layout, "posterior", cfg.seed, &summary)?;
    Ok(summary)
}

pub fn validate(cfg: &RunConfig, layout: &Layout) -> Result<ValidateSummary> {
    let (info, raw) = load_training(layout)?;
    if !info.has_experimental_w {
        return Err(Error::Config("validation needs the experimental parameter values".into()));
    }
    let exp_w = read_matrix_csv(layout.data.join("experimental_w.csv"))?;
    let post_w = read_matrix_csv(layout.posterior.join("w.csv"))?;
    let families = MarginalFamilies::build(&raw.w_block(), &exp_w, &post_w)?;
    validation::write_curves_csv(&families, &layout.validate.join("marginals.csv"))?;
    let summary = ValidateSummary {
        ovl: families.ovl_posterior()?,
        ovl_prior: families.ovl_prior()?,
        conv_std: validation::conv_std(&post_w, &exp_w)?,
    };
    write_json(&summary, &layout.validate.join("validate.json"))?;
    append_manifest(layout, "validate", cfg.seed, &summary)?;
    Ok(summary)
}

/// Runs one stage against the run directory, tagging any error with the stage.
pub fn run_stage(cfg: &RunConfig, layout: &Layout, stage: Stage) -> Result<()> {
    log::info!("stage {}", stage.name());
    let result = match stage {
        Stage::Generate => generate_with(cfg, layout, None).map(drop),
        Stage::Learn => learn(cfg, layout).map(drop),
        Stage::Reduce => reduce(cfg, layout).map(drop),
        Stage::Posterior => posterior(cfg, layout).map(drop),
        Stage::Validate => validate(cfg, layout).map(drop),
    };
    result.map_err(|e| e.in_stage(stage.name()))
}

/// Collects the derived hyperparameters from the stage summaries on disk.
pub fn hyperparameters(layout: &Layout) -> Hyperparameters {
    let mut h = Hyperparameters::default();
    if let Ok(l) = read_json::<LearnSummary>(&layout.learn.join("learn.json")) {
        h.nu_x = Some(l.nu_x);
        h.m = Some(l.m);
        h.eps_diff = Some(l.eps_diff);
    }
    if let Ok(r) = read_json::<ReduceSummary>(&layout.reduce.join("reduce.json")) {
        h.nu_q = Some(r.nu_q);
        h.nu_w = Some(r.nu_w);
    }
    if let Ok(p) = read_json::<PosteriorSummary>(&layout.posterior.join("posterior.json")) {
        h.nu1 = Some(p.nu1);
        h.n_s = Some(p.n_s);
        h.m_post = Some(p.projection.map_or(p.n_s, |(_, m)| m));
    }
    h
}

/// Validates the configuration, then runs `stages` in order. Validation is
/// skipped when the experimental parameter values are unavailable.
pub fn run_pipeline(cfg: &RunConfig, stages: &[Stage]) -> Result<Hyperparameters> {
    cfg.validate()?;
    let layout = Layout::new(&cfg.out);
    let mut ordered = stages.to_vec();
    ordered.sort_by_key(|s| Stage::ALL.iter().position(|t| t == s));
    ordered.dedup();
    for stage in ordered {
        if stage == Stage::Validate && !cfg.has_experimental_w() {
            log::warn!("no experimental parameter values; skipping validation");
            continue;
        }
        run_stage(cfg, &layout, stage)?;
    }
    let h = hyperparameters(&layout);
    append_manifest(&layout, "run", cfg.seed, &h)?;
    Ok(h)
}

