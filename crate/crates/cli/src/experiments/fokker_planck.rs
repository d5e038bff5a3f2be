use std::path::Path;

use anyhow::Result;
use serde_json::{json, Map};
use sgdlab_core::fokker_planck::{init_grid, FpSolver, GridDensity};

use crate::config::FokkerPlanckConfig;
use crate::model_build::{build_field, build_model};
use crate::report::{json_f64, verdict, RunWriter};
use crate::snapshot;

pub fn run(cfg: &FokkerPlanckConfig, base_dir: &Path, resolved: &str) -> Result<()> {
    let writer = RunWriter::new(&cfg.out_dir, &cfg.experiment, resolved, cfg.seed)?;
    let model = build_model(&cfg.model, base_dir)?;
    let field = build_field(&model, cfg.hyperparams.delta, cfg.hyperparams.batch_size)?;
    let eps = cfg.hyperparams.eps();
    let mut grid = init_grid(&cfg.grid.to_core(), &super::grid_init(&cfg.init))?;
    let solver = FpSolver::new(&grid, &model, &field, eps)?;
    let dt = solver.max_stable_dt();

    write_density_csv(&writer, "density_initial.csv", &grid)?;
    let mut snapshots_written = 1usize;
    if cfg.record_interval > 0.0 {
        let mut t = 0.0;
        let mut k = 1usize;
        while t + cfg.record_interval < cfg.t_end - 1e-12 {
            solver.advance(&mut grid, cfg.record_interval, dt)?;
            t += cfg.record_interval;
            write_density_csv(&writer, &format!("density_{k:04}.csv"), &grid)?;
            snapshots_written += 1;
            k += 1;
        }
        solver.advance(&mut grid, cfg.t_end - t, dt)?;
    } else {
        solver.advance(&mut grid, cfg.t_end, dt)?;
    }
    write_density_csv(&writer, "density_final.csv", &grid)?;
    snapshots_written += 1;
    if cfg.export_binary {
        writer.write_bytes("density_final.sgdt", &snapshot::encode_grid(&grid))?;
    }

    let mass = grid.mass();
    let mass_drift_rate = (mass - 1.0).abs() / cfg.t_end.max(1e-300);
    let center = vec![0.0; grid.dim()];
    let mut body = Map::new();
    body.insert("t_end".into(), json_f64(grid.time));
    body.insert("dt".into(), json_f64(dt));
    body.insert("cfl_bound".into(), json_f64(solver.cfl_bound()));
    body.insert("mass".into(), json_f64(mass));
    body.insert("mass_drift_per_unit_time".into(), json_f64(mass_drift_rate));
    body.insert("clipped_mass_total".into(), json_f64(grid.clipped_mass));
    body.insert("second_moment".into(), json_f64(grid.second_moment(&center)));
    body.insert("snapshots".into(), json!(snapshots_written));
    body.insert(
        "verdicts".into(),
        json!([
            verdict(
                "mass conservation within 1e-6 per unit time",
                mass_drift_rate <= 1e-6,
                &format!("drift rate {mass_drift_rate:e}"),
            ),
            verdict(
                "clipped mass within 1e-8 over the run",
                grid.clipped_mass <= 1e-8,
                &format!("clipped {:e}", grid.clipped_mass),
            ),
        ]),
    );
    writer.write_report(body)?;
    Ok(())
}

pub(super) fn write_density_csv(writer: &RunWriter, name: &str, grid: &GridDensity) -> Result<()> {
    let mut rows = Vec::with_capacity(grid.values.len());
    for (idx, v) in grid.values.iter().enumerate() {
        let mut row = grid.cell_center(idx);
        row.push(*v);
        rows.push(row);
    }
    let header: Vec<&str> = match grid.dim() {
        1 => vec!["x", "density"],
        _ => vec!["x", "y", "density"],
    };
    writer.write_csv(name, &header, &rows)
}
