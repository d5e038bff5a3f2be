//! One module per experiment; each consumes its config and writes CSV data,
//! `report.json`, and `config.resolved.json` into the output directory.

use std::path::Path;

use anyhow::Result;

use crate::config::ExperimentConfig;

mod concentration;
mod entropy;
mod exit_time;
mod fokker_planck;
mod kramers;
mod partition;
mod simulate;
mod steady_probe;
mod wasserstein;
mod weak_order;

pub fn run(cfg: &ExperimentConfig, base_dir: &Path) -> Result<()> {
    let resolved = cfg.to_json_pretty()?;
    match cfg {
        ExperimentConfig::Simulate(c) => simulate::run(c, base_dir, &resolved),
        ExperimentConfig::FokkerPlanck(c) => fokker_planck::run(c, base_dir, &resolved),
        ExperimentConfig::ExitTime(c) => exit_time::run(c, base_dir, &resolved),
        ExperimentConfig::Concentration(c) => concentration::run(c, base_dir, &resolved),
        ExperimentConfig::Entropy(c) => entropy::run(c, base_dir, &resolved),
        ExperimentConfig::Kramers(c) => kramers::run(c, base_dir, &resolved),
        ExperimentConfig::WeakOrder(c) => weak_order::run(c, base_dir, &resolved),
        ExperimentConfig::SteadyProbe(c) => steady_probe::run(c, base_dir, &resolved),
        ExperimentConfig::Partition(c) => partition::run(c, base_dir, &resolved),
        ExperimentConfig::Wasserstein(c) => wasserstein::run(c, base_dir, &resolved),
    }
}

pub(crate) fn scheme_from_str(s: &str) -> Result<sgdlab_core::simulate::Scheme> {
    use sgdlab_core::simulate::Scheme;
    Ok(match s {
        "sgd" => Scheme::Sgd,
        "nsgd" => Scheme::Nsgd,
        "euler-maruyama" => Scheme::EulerMaruyama,
        other => anyhow::bail!("unknown scheme `{other}`"),
    })
}

pub(crate) fn exit_domain(
    cfg: &crate::config::ExitDomainConfig,
) -> Result<sgdlab_core::simulate::ExitDomain> {
    use sgdlab_core::model::BoxDomain;
    use sgdlab_core::simulate::ExitDomain;
    Ok(match cfg {
        crate::config::ExitDomainConfig::Ball { center, radius } => ExitDomain::Ball {
            center: center.clone(),
            radius: *radius,
        },
        crate::config::ExitDomainConfig::Box { lo, hi } => {
            ExitDomain::Box(BoxDomain::new(lo.clone(), hi.clone())?)
        }
    })
}

pub(crate) fn grid_init(
    cfg: &crate::config::GridInitConfig,
) -> sgdlab_core::fokker_planck::InitialDensity<'static> {
    use sgdlab_core::fokker_planck::InitialDensity;
    match cfg {
        crate::config::GridInitConfig::Uniform => InitialDensity::Uniform,
        crate::config::GridInitConfig::Gaussian { mean, std } => InitialDensity::Gaussian {
            mean: mean.clone(),
            std: std.clone(),
        },
    }
}
