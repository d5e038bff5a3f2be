use std::path::Path;

use anyhow::{Context, Result};
use serde_json::{json, Map};
use sgdlab_core::simulate::{log_log_slope, weak_error_curve};

use crate::config::WeakOrderConfig;
use crate::model_build::{build_field, build_model};
use crate::report::{json_f64, verdict, RunWriter};

pub fn run(cfg: &WeakOrderConfig, base_dir: &Path, resolved: &str) -> Result<()> {
    let writer = RunWriter::new(&cfg.out_dir, &cfg.experiment, resolved, cfg.seed)?;
    let model = build_model(&cfg.model, base_dir)?;
    if cfg.batch_size > model.n_samples() {
        anyhow::bail!(
            "batch size {} exceeds the sample count {}",
            cfg.batch_size,
            model.n_samples()
        );
    }
    let field = build_field(&model, 0.0, cfg.batch_size)?;
    if cfg.observable != "second-moment" {
        anyhow::bail!("unsupported observable `{}`", cfg.observable);
    }
    let points = weak_error_curve(
        &model,
        &field,
        |x| x.iter().map(|v| v * v).sum::<f64>(),
        &cfg.etas,
        cfg.n_steps_at_max,
        cfg.batch_size,
        cfg.n_trajectories,
        &cfg.init.to_core(),
        cfg.seed,
    )?;

    let rows: Vec<Vec<f64>> = points
        .iter()
        .map(|p| {
            vec![
                p.eta,
                p.n_steps as f64,
                p.discrete_mean,
                p.discrete_se,
                p.continuous_mean,
                p.continuous_se,
                p.gap,
                if p.resolved { 1.0 } else { 0.0 },
            ]
        })
        .collect();
    writer.write_csv(
        "weak_order.csv",
        &[
            "eta",
            "n_steps",
            "discrete_mean",
            "discrete_se",
            "continuous_mean",
            "continuous_se",
            "gap",
            "resolved",
        ],
        &rows,
    )?;

    let slope = log_log_slope(&points).context("need at least two positive gaps")?;
    let unresolved = points.iter().filter(|p| !p.resolved).count();
    let mut body = Map::new();
    body.insert("slope".into(), json_f64(slope));
    body.insert("unresolved_entries".into(), json!(unresolved));
    body.insert(
        "verdicts".into(),
        json!([
            verdict(
                "log-log slope within [0.7, 1.3]",
                (0.7..=1.3).contains(&slope),
                &format!("{slope}"),
            ),
            verdict("all entries resolved", unresolved == 0, &format!("{unresolved} unresolved")),
        ]),
    );
    writer.write_report(body)?;
    Ok(())
}
