use std::path::Path;

use anyhow::{Context, Result};
use serde_json::{json, Map};
use sgdlab_core::exit_time::{kramers_estimate, saddle_scan_1d, KramersMode};
use sgdlab_core::simulate::sample_exit_times;

use crate::config::{ExitDomainConfig, KramersExperimentConfig};
use crate::model_build::{build_field, build_model};
use crate::report::{json_f64, verdict, RunWriter};

pub fn run(cfg: &KramersExperimentConfig, base_dir: &Path, resolved: &str) -> Result<()> {
    let writer = RunWriter::new(&cfg.out_dir, &cfg.experiment, resolved, cfg.seed)?;
    let model = build_model(&cfg.model, base_dir)?;
    if model.dim() != 1 {
        anyhow::bail!("the kramers experiment drives 1D models");
    }
    let field = build_field(&model, 0.0, 1)?;
    let domain = super::exit_domain(&cfg.domain)?;
    let (_lo, hi) = match &cfg.domain {
        ExitDomainConfig::Box { lo, hi } => (lo[0], hi[0]),
        _ => anyhow::bail!("the kramers experiment needs a box domain"),
    };
    // Relevant saddle: the interior maximum on the path from the well to the
    // absorbing edge.
    let saddle = saddle_scan_1d(&model, cfg.x1[0], hi).context("saddle scan")?;
    let barrier = model.value(&[saddle.z]) - model.value(&cfg.x1);

    let mut rows = Vec::new();
    let mut fit_pts = Vec::new();
    let mut per_eps = Vec::new();
    for (i, &eps2) in cfg.eps2_list.iter().enumerate() {
        let eps = eps2.sqrt();
        let prediction =
            kramers_estimate(&model, &cfg.x1, &[saddle.z], eps, KramersMode::OneDim)?;
        let horizon = cfg.horizon_factor * prediction;
        let stats = sample_exit_times(
            &model,
            &field,
            eps,
            &domain,
            &cfg.x0,
            cfg.dt,
            cfg.n_trajectories,
            horizon,
            cfg.seed.wrapping_add(i as u64),
        )?;
        let ratio = stats.mean / prediction;
        rows.push(vec![
            eps2,
            stats.mean,
            stats.se,
            stats.censoring_fraction,
            prediction,
            ratio,
        ]);
        fit_pts.push((1.0 / eps2, stats.mean.ln()));
        per_eps.push(json!({
            "eps2": json_f64(eps2),
            "mc_mean": json_f64(stats.mean),
            "mc_se": json_f64(stats.se),
            "censoring": json_f64(stats.censoring_fraction),
            "prediction": json_f64(prediction),
            "ratio": json_f64(ratio),
        }));
    }
    writer.write_csv(
        "kramers.csv",
        &["eps2", "mc_mean", "mc_se", "censoring", "prediction", "ratio"],
        &rows,
    )?;

    // Kramers exponent: slope of log(mean exit time) against 1/eps^2.
    let slope = sgdlab_core::simulate::fit_slope(&fit_pts)
        .context("need at least two eps values for the exponent fit")?;
    let rel_err = ((slope - barrier) / barrier).abs();

    let mut body = Map::new();
    body.insert("saddle".into(), json_f64(saddle.z));
    body.insert("barrier".into(), json_f64(barrier));
    body.insert("exponent_estimate".into(), json_f64(slope));
    body.insert("exponent_rel_error".into(), json_f64(rel_err));
    body.insert("per_eps".into(), json!(per_eps));
    body.insert(
        "verdicts".into(),
        json!([verdict(
            "fitted exponent within 15% of the barrier height",
            rel_err <= 0.15,
            &format!("slope {slope} vs barrier {barrier}"),
        )]),
    );
    writer.write_report(body)?;
    Ok(())
}
