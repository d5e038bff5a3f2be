//! Build loss models and diffusion fields from config specs.

use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use sgdlab_core::model::{catalog, DiffusionField, LossModel};

use crate::config::ModelSpec;

pub fn build_model(spec: &ModelSpec, base_dir: &Path) -> Result<Arc<LossModel>> {
    let dim = spec.dim.unwrap_or(1);
    let lambda = spec.lambda.unwrap_or(1.0);
    let sigma = spec.sigma.unwrap_or(1.0);
    let scale = spec.scale.unwrap_or(1.0);
    let pairs = spec.pairs.unwrap_or(1);
    let domain_radius = spec.domain_radius.unwrap_or(3.0);
    let model = match spec.key.as_str() {
        "quadratic" => catalog::quadratic(dim, lambda, spec.x0.clone()),
        "quadratic_noisy" => catalog::quadratic_noisy(dim, lambda, sigma, pairs),
        "quadratic_degenerate" => catalog::quadratic_degenerate(dim, lambda, sigma),
        "quadratic_aniso" => {
            let cs = spec
                .coefficients
                .clone()
                .context("quadratic_aniso needs `coefficients`")?;
            catalog::quadratic_aniso(cs)
        }
        "quadratic_aniso_noisy" => {
            let cs = spec
                .coefficients
                .clone()
                .context("quadratic_aniso_noisy needs `coefficients`")?;
            catalog::quadratic_aniso_noisy(cs, sigma, domain_radius)
        }
        "radial_poly" => catalog::radial_poly(dim, spec.p.context("radial_poly needs `p`")?),
        "exp_well" => catalog::exp_well(),
        "exp_well_noisy" => catalog::exp_well_noisy(sigma, domain_radius),
        "product_well" => catalog::product_well(),
        "double_well_1d" => catalog::double_well_1d(scale),
        "double_well_1d_noisy" => catalog::double_well_1d_noisy(scale, sigma, domain_radius),
        "double_well_2d" => catalog::double_well_2d(scale),
        "linear_pair_1d" => catalog::linear_pair_1d(sigma.sqrt()),
        "dataset" => {
            let rel = spec.path.as_ref().context("dataset needs `path`")?;
            let path = base_dir.join(rel);
            let rows = read_dataset_csv(&path)
                .with_context(|| format!("reading dataset {}", path.display()))?;
            catalog::dataset_quadratic(rows)?
        }
        other => bail!("unknown model key `{other}`"),
    };
    Ok(Arc::new(model))
}

pub fn build_field(model: &Arc<LossModel>, delta: f64, batch_size: usize) -> Result<DiffusionField> {
    Ok(DiffusionField::new(model.clone(), delta, batch_size)?)
}

/// Dataset rows `a_1..a_d, y`: header required, UTF-8, `.` decimal separator.
pub fn read_dataset_csv(path: &Path) -> Result<Vec<(Vec<f64>, f64)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    if headers.len() < 2 {
        bail!("dataset needs at least one feature column and `y`");
    }
    let last = headers.len() - 1;
    if headers.get(last) != Some("y") {
        bail!("last dataset column must be named `y`, got {:?}", headers.get(last));
    }
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != headers.len() {
            bail!("row {line} has {} fields, expected {}", record.len(), headers.len());
        }
        let mut a = Vec::with_capacity(last);
        for i in 0..last {
            a.push(record[i].parse::<f64>().with_context(|| {
                format!("row {line}, column {}: `{}`", &headers[i], &record[i])
            })?);
        }
        let y = record[last]
            .parse::<f64>()
            .with_context(|| format!("row {line}, column y: `{}`", &record[last]))?;
        rows.push((a, y));
    }
    Ok(rows)
}

/// Single-column sample file (header `x`).
pub fn read_samples_csv(path: &Path) -> Result<Vec<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record?;
        out.push(record[0].parse::<f64>()?);
    }
    Ok(out)
}
