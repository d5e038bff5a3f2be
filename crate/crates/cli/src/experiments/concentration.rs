use std::path::Path;

use anyhow::Result;
use serde_json::{json, Map};
use sgdlab_core::concentration::{concentration_horizon, concentration_report};
use sgdlab_core::model::{lambda_convexity, Hyperparams};
use sgdlab_core::simulate::{run_ensemble, EnsembleConfig, Scheme};

use crate::config::ConcentrationConfig;
use crate::model_build::{build_field, build_model};
use crate::report::{json_f64, verdict, RunWriter};

pub fn run(cfg: &ConcentrationConfig, base_dir: &Path, resolved: &str) -> Result<()> {
    let writer = RunWriter::new(&cfg.out_dir, &cfg.experiment, resolved, cfg.seed)?;
    let model = build_model(&cfg.model, base_dir)?;
    let field = build_field(&model, cfg.hyperparams.delta, cfg.hyperparams.batch_size)?;
    let eps = cfg.hyperparams.eps();

    let lambda_est = match cfg.lambda {
        Some(l) => l,
        None => lambda_convexity(&model, &cfg.center, (1.0 + cfg.shoulder) * cfg.r0, 256)?,
    };
    if lambda_est <= 0.0 {
        anyhow::bail!("loss is not convex on the shoulder ball (lambda estimate {lambda_est})");
    }
    let lambda = 0.95 * lambda_est;
    let t_eps = concentration_horizon(lambda, cfg.r0, cfg.a, cfg.alpha, eps);
    let n_steps = (t_eps / cfg.dt).ceil() as usize;
    let trace = run_ensemble(&EnsembleConfig {
        scheme: Scheme::EulerMaruyama,
        model: &model,
        field: Some(&field),
        hp: Some(Hyperparams::new(cfg.hyperparams.eta, cfg.hyperparams.batch_size)?),
        delta: cfg.hyperparams.delta,
        eps,
        dt: cfg.dt,
        init: cfg.init.to_core(),
        n_traj: cfg.n_trajectories,
        n_steps,
        record_stride: cfg.record_stride,
        root_seed: cfg.seed,
    })?;

    let report = concentration_report(
        &trace,
        &cfg.center,
        cfg.r0,
        cfg.shoulder,
        lambda_est,
        cfg.sigma,
        cfg.a,
        cfg.alpha,
        cfg.beta,
        eps,
    )?;

    let m0 = report.series[0].smoothed_mass;
    let rows: Vec<Vec<f64>> = report
        .series
        .iter()
        .map(|s| vec![s.t, s.smoothed_mass, s.se.unwrap_or(0.0), m0 - cfg.beta])
        .collect();
    writer.write_csv("concentration.csv", &["t", "smoothed_mass", "se", "bound"], &rows)?;

    let mut body = Map::new();
    body.insert("t_eps".into(), json_f64(report.t_eps));
    body.insert("lambda_estimate".into(), json_f64(lambda_est));
    body.insert("lambda_used".into(), json_f64(report.lambda_used));
    body.insert("initial_mass".into(), json_f64(m0));
    body.insert("min_margin".into(), json_f64(report.min_margin));
    body.insert("pass".into(), json!(report.pass));
    body.insert(
        "error_budget".into(),
        json!({
            "value": json_f64(report.error_budget),
            "note": "sufficient, not sharp",
        }),
    );
    body.insert(
        "verdicts".into(),
        json!([verdict(
            "smoothed mass stays within beta of its initial value over the window",
            report.pass,
            &format!("min margin {}", report.min_margin),
        )]),
    );
    writer.write_report(body)?;
    Ok(())
}
