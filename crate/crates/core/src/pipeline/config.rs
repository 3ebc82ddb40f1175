use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learning::LearningConfig;
use crate::posterior::PosteriorSamplerConfig;
use crate::synthetic::ApConfig;

/// Default ε values of the regularization sweep.
pub const DEFAULT_EPS_GRID: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

/// Source of the training and experimental datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum DataSource {
    /// One of the built-in synthetic problems; its seed is the run seed.
    Synthetic(ApConfig),
    /// CSV files: training columns `(q, w)`, experimental `q` columns and
    /// optionally the matching experimental `w` columns.
    Files {
        training: PathBuf,
        n_q: usize,
        experimental: PathBuf,
        #[serde(default)]
        experimental_w: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReductionSettings {
    pub eps_q: f64,
    pub eps_w: f64,
}

impl Default for ReductionSettings {
    fn default() -> Self {
        Self { eps_q: 1e-4, eps_w: 1e-4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DensitySettings {
    /// Regularization parameter, in `[0.1, 1)`.
    pub epsilon: f64,
}

impl Default for DensitySettings {
    fn default() -> Self {
        Self { epsilon: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSettings {
    pub eps_grid: Vec<f64>,
    pub nd_grid: Vec<usize>,
    /// Seeds replicated by the sweeps; the run seed when empty.
    pub seeds: Vec<u64>,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            eps_grid: DEFAULT_EPS_GRID.to_vec(),
            nd_grid: vec![50, 100, 150, 200],
            seeds: Vec::new(),
        }
    }
}

/// Full configuration of a pipeline run, read from TOML.
///
/// The `seed` fields of the synthetic, `learning` and `posterior` sections
/// are overridden by the run seed; the random streams of the stages are
/// separated by domain tags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    /// Output directory; relative paths resolve against the working directory.
    pub out: PathBuf,
    /// Worker thread cap; all cores when absent.
    #[serde(default)]
    pub threads: Option<usize>,
    pub data: DataSource,
    #[serde(default)]
    pub learning: LearningConfig,
    #[serde(default)]
    pub reduction: ReductionSettings,
    #[serde(default)]
    pub density: DensitySettings,
    #[serde(default)]
    pub posterior: PosteriorSamplerConfig,
    #[serde(default)]
    pub sweep: SweepSettings,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a TOML file; relative data paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        if let DataSource::Files {
            training,
            experimental,
            experimental_w,
            ..
        } = &mut cfg.data
        {
            for p in [Some(training), Some(experimental), experimental_w.as_mut()].into_iter().flatten() {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    /// Checks every setting and that referenced input files exist.
    pub fn validate(&self) -> Result<()> {
        match &self.data {
            DataSource::Synthetic(ap) => ap.validate()?,
            DataSource::Files {
                training,
                n_q,
                experimental,
                experimental_w,
            } => {
                if *n_q == 0 {
                    return Err(Error::Config("n_q must be positive".into()));
                }
                for p in [Some(training), Some(experimental), experimental_w.as_ref()].into_iter().flatten() {
                    if !p.is_file() {
                        return Err(Error::Config(format!("input file {} does not exist", p.display())));
                    }
                }
            }
        }
        self.learning.validate()?;
        self.posterior.validate()?;
        check_epsilon(self.density.epsilon)?;
        for &e in &self.sweep.eps_grid {
            check_epsilon(e)?;
        }
        if !(self.reduction.eps_q > 0.0 && self.reduction.eps_w > 0.0) {
            return Err(Error::Config("reduction thresholds must be positive".into()));
        }
        if self.sweep.nd_grid.iter().any(|&n| n < 2) {
            return Err(Error::Config("N_d grid values must be at least 2".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        Ok(())
    }

    /// Seeds replicated by the sweeps.
    pub fn sweep_seeds(&self) -> Vec<u64> {
        if self.sweep.seeds.is_empty() {
            vec![self.seed]
        } else {
            self.sweep.seeds.clone()
        }
    }

    /// Whether the experimental parameter values are available.
    pub fn has_experimental_w(&self) -> bool {
        match &self.data {
            DataSource::Synthetic(_) => true,
            DataSource::Files { experimental_w, .. } => experimental_w.is_some(),
        }
    }

    /// Copy with the run seed replaced.
    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

fn check_epsilon(e: f64) -> Result<()> {
    if (0.1..1.0).contains(&e) {
        Ok(())
    } else {
        Err(Error::Config(format!("ε must lie in [0.1, 1), got {e}")))
    }
}

