use std::path::Path;

use anyhow::{Context, Result};
use serde_json::{json, Map};
use sgdlab_core::model::Hyperparams;
use sgdlab_core::simulate::{run_ensemble, EnsembleConfig, Scheme};

use crate::config::SimulateConfig;
use crate::model_build::{build_field, build_model};
use crate::report::{json_f64, RunWriter};
use crate::snapshot;

pub fn run(cfg: &SimulateConfig, base_dir: &Path, resolved: &str) -> Result<()> {
    let writer = RunWriter::new(&cfg.out_dir, &cfg.experiment, resolved, cfg.seed)?;
    let model = build_model(&cfg.model, base_dir)?;
    let scheme = super::scheme_from_str(&cfg.scheme)?;
    let hp = Hyperparams::new(cfg.hyperparams.eta, cfg.hyperparams.batch_size)?;
    if cfg.hyperparams.batch_size > model.n_samples() {
        anyhow::bail!(
            "batch size {} exceeds the sample count {}",
            cfg.hyperparams.batch_size,
            model.n_samples()
        );
    }
    let field = build_field(&model, cfg.hyperparams.delta, cfg.hyperparams.batch_size)?;
    let dt = match scheme {
        Scheme::EulerMaruyama => cfg.dt.context("euler-maruyama needs `dt`")?,
        _ => 0.0,
    };
    let trace = run_ensemble(&EnsembleConfig {
        scheme,
        model: &model,
        field: Some(&field),
        hp: Some(hp),
        delta: cfg.hyperparams.delta,
        eps: cfg.hyperparams.eps(),
        dt,
        init: cfg.init.to_core(),
        n_traj: cfg.n_trajectories,
        n_steps: cfg.n_steps,
        record_stride: cfg.record_stride,
        root_seed: cfg.seed,
    })?;

    // trace.csv: time, trajectory, x_1..x_d
    let mut rows = Vec::new();
    for (ti, t) in trace.times.iter().enumerate() {
        for k in 0..trace.n_traj {
            let mut row = vec![*t, k as f64];
            row.extend_from_slice(trace.particle(ti, k));
            rows.push(row);
        }
    }
    let mut header = vec!["time".to_string(), "trajectory".to_string()];
    for i in 1..=trace.dim {
        header.push(format!("x_{i}"));
    }
    let header_refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    writer.write_csv("trace.csv", &header_refs, &rows)?;

    if cfg.export_binary {
        writer.write_bytes("trace.sgdt", &snapshot::encode_trace(&trace))?;
    }

    let last = trace.times.len() - 1;
    let mut body = Map::new();
    body.insert("scheme".into(), json!(trace.scheme.tag()));
    body.insert("n_trajectories".into(), json!(trace.n_traj));
    body.insert("dim".into(), json!(trace.dim));
    body.insert("horizon".into(), json_f64(*trace.times.last().unwrap()));
    let (m2, m2_se) = trace.observable_mean(last, |x| x.iter().map(|v| v * v).sum::<f64>());
    body.insert("terminal_second_moment".into(), json_f64(m2));
    body.insert("terminal_second_moment_se".into(), json_f64(m2_se));
    let mut means = Vec::new();
    for i in 0..trace.dim {
        let (m, _) = trace.observable_mean(last, |x| x[i]);
        means.push(json_f64(m));
    }
    body.insert("terminal_mean".into(), json!(means));
    writer.write_report(body)?;
    Ok(())
}
