use std::path::Path;

use anyhow::Result;
use serde_json::{json, Map};
use sgdlab_core::fokker_planck::steady_state_probe_delta_to_zero;

use crate::config::SteadyProbeConfig;
use crate::model_build::build_model;
use crate::report::{json_f64, verdict, RunWriter};

pub fn run(cfg: &SteadyProbeConfig, base_dir: &Path, resolved: &str) -> Result<()> {
    let writer = RunWriter::new(&cfg.out_dir, &cfg.experiment, resolved, cfg.seed)?;
    let model = build_model(&cfg.model, base_dir)?;
    let eps = cfg.hyperparams.eps();
    let init = super::grid_init(&cfg.init);
    let probes = steady_state_probe_delta_to_zero(
        &model,
        eps,
        &cfg.deltas,
        &cfg.grid.to_core(),
        &init,
        cfg.horizon,
        &cfg.ball_radii,
        cfg.drift_threshold,
    )?;

    let mut rows = Vec::new();
    let mut per_delta = Vec::new();
    let mut tails_monotone = true;
    for (i, p) in probes.iter().enumerate() {
        for (r, m) in &p.tail_masses {
            rows.push(vec![p.delta, *r, *m]);
        }
        for w in p.tail_masses.windows(2) {
            if w[1].1 > w[0].1 + 1e-12 {
                tails_monotone = false;
            }
        }
        super::fokker_planck::write_density_csv(
            &writer,
            &format!("density_delta_{i:02}.csv"),
            &p.density,
        )?;
        per_delta.push(json!({
            "delta": json_f64(p.delta),
            "l1_drift_rate": json_f64(p.l1_drift_rate),
            "second_moment": json_f64(p.density.second_moment(&vec![0.0; p.density.dim()])),
            "tail_masses": p.tail_masses.iter()
                .map(|(r, m)| json!([json_f64(*r), json_f64(*m)]))
                .collect::<Vec<_>>(),
        }));
    }
    writer.write_csv("tails.csv", &["delta", "radius", "tail_mass"], &rows)?;

    let mut body = Map::new();
    body.insert("per_delta".into(), json!(per_delta));
    body.insert(
        "verdicts".into(),
        json!([verdict(
            "tail mass decreases with the ball radius for every delta",
            tails_monotone,
            "tightness diagnostic",
        )]),
    );
    writer.write_report(body)?;
    Ok(())
}
