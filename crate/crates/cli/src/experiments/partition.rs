use std::path::Path;

use anyhow::Result;
use serde_json::{json, Map, Value};
use sgdlab_core::asymptotics::mass_partition;
use sgdlab_core::exit_time::saddle_scan_1d;
use sgdlab_core::fokker_planck::{gibbs_steady_state, GridSpec};
use sgdlab_core::model::{locate_minima, BoxDomain, Hyperparams};
use sgdlab_core::simulate::{run_ensemble, EnsembleConfig, Scheme};

use crate::config::PartitionConfig;
use crate::model_build::{build_field, build_model};
use crate::report::{json_f64, verdict, RunWriter};

pub fn run(cfg: &PartitionConfig, base_dir: &Path, resolved: &str) -> Result<()> {
    let writer = RunWriter::new(&cfg.out_dir, &cfg.experiment, resolved, cfg.seed)?;
    let model = build_model(&cfg.model, base_dir)?;
    let field = build_field(&model, cfg.hyperparams.delta, cfg.hyperparams.batch_size)?;
    let hp = Hyperparams::new(cfg.hyperparams.eta, cfg.hyperparams.batch_size)?;

    let domain = BoxDomain::new(cfg.minima_box_lo.clone(), cfg.minima_box_hi.clone())?;
    let minima = locate_minima(&model, &domain, cfg.n_starts)?;

    let trace = run_ensemble(&EnsembleConfig {
        scheme: Scheme::Nsgd,
        model: &model,
        field: Some(&field),
        hp: Some(hp),
        delta: cfg.hyperparams.delta,
        eps: cfg.hyperparams.eps(),
        dt: 0.0,
        init: cfg.init.to_core(),
        n_traj: cfg.n_trajectories,
        n_steps: cfg.n_steps,
        record_stride: cfg.n_steps.max(1),
        root_seed: cfg.seed,
    })?;
    let terminal = trace.terminal();
    let partition = mass_partition(terminal, model.dim(), &minima, &model)?;

    let minima_rows: Vec<Vec<f64>> = minima
        .iter()
        .zip(&partition.weights)
        .map(|(m, w)| {
            let mut row = m.x.clone();
            row.push(m.value);
            row.push(*w);
            row
        })
        .collect();
    let mut header: Vec<String> = (1..=model.dim()).map(|i| format!("x_{i}")).collect();
    header.push("loss".into());
    header.push("weight".into());
    let header_refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    writer.write_csv("partition.csv", &header_refs, &minima_rows)?;

    // Gibbs well-mass comparison (1D models): split the stationary density at
    // the scan saddles between consecutive minima.
    let gibbs_cmp: Value = match (cfg.gibbs_sigma, model.dim()) {
        (Some(sigma), 1) if minima.len() >= 2 => {
            let spec = GridSpec::new_1d(cfg.minima_box_lo[0], cfg.minima_box_hi[0], 1600);
            let gibbs = gibbs_steady_state(&model, cfg.hyperparams.eps(), sigma, &spec)?;
            let mut splits = Vec::new();
            for w in minima.windows(2) {
                splits.push(saddle_scan_1d(&model, w[0].x[0], w[1].x[0])?.z);
            }
            let vol = gibbs.cell_volume();
            let mut masses = vec![0.0; minima.len()];
            for (idx, v) in gibbs.values.iter().enumerate() {
                let x = gibbs.axes[0].center(idx);
                let basin = splits.iter().take_while(|s| x > **s).count();
                masses[basin] += v * vol;
            }
            json!({
                "sigma": json_f64(sigma),
                "well_masses": masses.iter().map(|m| json_f64(*m)).collect::<Vec<_>>(),
                "splits": splits.iter().map(|s| json_f64(*s)).collect::<Vec<_>>(),
            })
        }
        _ => Value::Null,
    };

    let mut body = Map::new();
    body.insert(
        "weights".into(),
        json!(partition.weights.iter().map(|w| json_f64(*w)).collect::<Vec<_>>()),
    );
    body.insert(
        "minima".into(),
        json!(minima
            .iter()
            .map(|m| json!({
                "x": m.x.iter().map(|v| json_f64(*v)).collect::<Vec<_>>(),
                "loss": json_f64(m.value),
            }))
            .collect::<Vec<_>>()),
    );
    body.insert("unassigned_fraction".into(), json_f64(partition.unassigned_fraction));
    body.insert("unreliable".into(), json!(partition.unreliable));
    body.insert("gibbs_comparison".into(), gibbs_cmp);
    body.insert(
        "verdicts".into(),
        json!([verdict(
            "basin assignment covered at least 95% of the particles",
            !partition.unreliable,
            &format!("unassigned fraction {}", partition.unassigned_fraction),
        )]),
    );
    writer.write_report(body)?;
    Ok(())
}
