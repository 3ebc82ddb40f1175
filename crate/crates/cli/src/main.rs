use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use plom_core::pipeline::{self, RunConfig, Stage};

/// Bayesian posterior sampling from small training sets.
#[derive(Parser, Debug)]
#[command(name = "plom", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the run seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Caps the number of worker threads.
    #[arg(long)]
    threads: Option<usize>,
    /// Overrides the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the training and experimental datasets.
    Generate(Common),
    /// Scale the training set and generate the learned dataset.
    Learn(Common),
    /// Reduce the learned dataset and project the experiments.
    Reduce(Common),
    /// Sample the posterior of the parameters.
    Posterior(Common),
    /// Compare posterior, training and experimental marginals.
    Validate(Common),
    /// Sweep the regularization parameter.
    SweepEps {
        #[command(flatten)]
        common: Common,
        /// Comma-separated ε values; the configured grid when absent.
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
    },
    /// Sweep the training-set size.
    SweepNd {
        #[command(flatten)]
        common: Common,
        /// Comma-separated N_d values; the configured grid when absent.
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<usize>>,
    },
    /// Run every stage.
    All(Common),
}

fn load(common: &Common) -> anyhow::Result<RunConfig> {
    let mut cfg = RunConfig::load(&common.config).with_context(|| format!("loading {}", common.config.display()))?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out = out.clone();
    }
    if common.threads.is_some() {
        cfg.threads = common.threads;
    }
    cfg.validate()?;
    if let Some(n) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    Ok(cfg)
}

fn print_rows(rows: &[plom_core::validation::SweepRow]) {
    println!("parameter,seed,ovl,conv_std,ovl_prior,error");
    let f = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.6}"));
    for r in rows {
        println!(
            "{},{},{},{},{},{}",
            r.parameter,
            r.seed,
            f(r.ovl),
            f(r.conv_std),
            f(r.ovl_prior),
            r.error.as_deref().unwrap_or("")
        );
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let stage = |common: &Common, stages: &[Stage]| -> anyhow::Result<()> {
        let cfg = load(common)?;
        let h = pipeline::run_pipeline(&cfg, stages)?;
        println!("{}", serde_json::to_string(&h)?);
        Ok(())
    };
    match &cli.command {
        Command::Generate(c) => stage(c, &[Stage::Generate]),
        Command::Learn(c) => stage(c, &[Stage::Learn]),
        Command::Reduce(c) => stage(c, &[Stage::Reduce]),
        Command::Posterior(c) => stage(c, &[Stage::Posterior]),
        Command::Validate(c) => stage(c, &[Stage::Validate]),
        Command::All(c) => stage(c, &Stage::ALL),
        Command::SweepEps { common, grid } => {
            let cfg = load(common)?;
            let grid = grid.clone().unwrap_or_else(|| cfg.sweep.eps_grid.clone());
            print_rows(&pipeline::run_epsilon_sweep(&cfg, &grid)?);
            Ok(())
        }
        Command::SweepNd { common, grid } => {
            let cfg = load(common)?;
            let grid = grid.clone().unwrap_or_else(|| cfg.sweep.nd_grid.clone());
            print_rows(&pipeline::run_nd_sweep(&cfg, &grid)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
