//! Command-line harness for `tango-core`: configuration files, the built-in
//! experiment registry, trajectory output, sweeps and the verification suite.

pub mod config;
pub mod fig1;
pub mod geometry;
pub mod output;
pub mod registry;
pub mod suite;
pub mod sweep;

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use tango_core::models::Model;
use tango_core::optimizers;

use config::ExperimentConfig;
use output::RunSummary;

/// Environment variable that overrides every configured seed.
pub const SEED_ENV: &str = "TANGO_SEED";

pub fn seed_override() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .with_context(|| format!("{SEED_ENV}: `{s}` is not an unsigned 64-bit integer")),
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(e).context(SEED_ENV),
    }
}

/// A config file path, or the name of a built-in config.
pub fn resolve_config(arg: &str) -> Result<ExperimentConfig> {
    let path = Path::new(arg);
    let cfg = if path.exists() {
        ExperimentConfig::load(path)?
    } else if let Some(cfg) = registry::builtin(arg) {
        cfg
    } else {
        bail!(
            "`{arg}` is neither a config file nor a built-in config ({})",
            registry::NAMES.join(", ")
        );
    };
    Ok(match seed_override()? {
        Some(seed) => cfg.with_seed(seed),
        None => cfg,
    })
}

pub fn output_dir(cfg: &ExperimentConfig, flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("out"))
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub csv: PathBuf,
    pub summary: RunSummary,
}

/// Runs one experiment and writes `<name>.csv` plus its summary files.
pub fn run_experiment(cfg: &ExperimentConfig, dir: &Path) -> Result<RunOutcome> {
    let exp = cfg.build()?;
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let start = Instant::now();
    let record = optimizers::run(&exp.run, &exp.model, &exp.dataset, &exp.theta0)
        .with_context(|| format!("run `{}`", cfg.name))?;
    let wall_time_s = start.elapsed().as_secs_f64();
    let last = record.last().context("run produced no rows")?;
    let summary = RunSummary {
        name: cfg.name.clone(),
        model: exp.model.name().to_string(),
        optimizer: cfg.optimizer.name().to_string(),
        seed: cfg.seed,
        horizon: cfg.horizon,
        steps: record.steps,
        final_theta: last.theta.clone(),
        final_loss: last.loss,
        wall_time_s,
    };
    let csv = dir.join(format!("{}.csv", cfg.name));
    output::write_trajectory_file(&csv, &record)?;
    summary.write(dir, &cfg.name)?;
    Ok(RunOutcome { csv, summary })
}
