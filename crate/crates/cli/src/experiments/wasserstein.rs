use std::path::Path;

use anyhow::Result;
use serde_json::{json, Map};
use sgdlab_core::asymptotics::wasserstein2_1d;

use crate::config::WassersteinConfig;
use crate::model_build::read_samples_csv;
use crate::report::{json_f64, RunWriter};

pub fn run(cfg: &WassersteinConfig, base_dir: &Path, resolved: &str) -> Result<()> {
    let writer = RunWriter::new(&cfg.out_dir, &cfg.experiment, resolved, cfg.seed)?;
    let a = read_samples_csv(&base_dir.join(&cfg.samples_a))?;
    let b = read_samples_csv(&base_dir.join(&cfg.samples_b))?;
    let w2 = wasserstein2_1d(&a, &b)?;
    let mut body = Map::new();
    body.insert("w2".into(), json_f64(w2));
    body.insert("n_samples".into(), json!(a.len()));
    writer.write_report(body)?;
    Ok(())
}
