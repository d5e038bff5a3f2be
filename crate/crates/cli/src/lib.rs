//! Experiment front door: strict JSON configs in, deterministic CSV/JSON
//! reports out. See the README for the config schema of each experiment.

pub mod config;
pub mod experiments;
pub mod model_build;
pub mod report;
pub mod snapshot;

use std::path::Path;

use anyhow::{Context, Result};

use config::ExperimentConfig;

/// Load a config for `subcommand`, applying optional seed/out-dir overrides.
pub fn load_config(
    subcommand: &str,
    config_path: &Path,
    seed_override: Option<u64>,
    out_override: Option<String>,
) -> Result<ExperimentConfig> {
    let raw = std::fs::read_to_string(config_path)
        .with_context(|| format!("reading config {}", config_path.display()))?;
    let mut cfg = ExperimentConfig::from_json(&raw, subcommand)?;
    if let Some(seed) = seed_override {
        cfg.set_seed(seed);
    }
    if let Some(out) = out_override {
        cfg.set_out_dir(out);
    }
    Ok(cfg)
}

/// Run one experiment: paths inside the config resolve relative to
/// `base_dir` (the config file's directory).
pub fn run_experiment(cfg: &ExperimentConfig, base_dir: &Path) -> Result<()> {
    experiments::run(cfg, base_dir)
}
