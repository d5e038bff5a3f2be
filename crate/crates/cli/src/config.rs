//! Strict experiment configuration schema.
//!
//! Every config is a JSON object with an `experiment` tag plus per-experiment
//! fields; unknown keys are rejected. Each run re-serializes the resolved
//! config (after `--seed`/`--out` overrides) next to its outputs.

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub key: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coefficients: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain_radius: Option<f64>,
    /// CSV path for `key = "dataset"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
}

/// Learning-rate block. The effective learning rate is always
/// `eps^2 = eta / (2 batch_size)` unless `epsilon_squared` overrides it for
/// SDE-side experiments.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperparamsSpec {
    pub eta: f64,
    pub batch_size: usize,
    #[serde(default)]
    pub delta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon_squared: Option<f64>,
}

impl HyperparamsSpec {
    pub fn eps2(&self) -> f64 {
        self.epsilon_squared
            .unwrap_or(self.eta / (2.0 * self.batch_size as f64))
    }

    pub fn eps(&self) -> f64 {
        self.eps2().sqrt()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpecConfig {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub cells: Vec<usize>,
}

impl GridSpecConfig {
    pub fn to_core(&self) -> sgdlab_core::fokker_planck::GridSpec {
        sgdlab_core::fokker_planck::GridSpec {
            lo: self.lo.clone(),
            hi: self.hi.clone(),
            cells: self.cells.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub enum InitSpecConfig {
    Point { at: Vec<f64> },
    Gaussian { mean: Vec<f64>, std: f64 },
}

impl InitSpecConfig {
    pub fn to_core(&self) -> sgdlab_core::simulate::InitSpec {
        match self {
            InitSpecConfig::Point { at } => sgdlab_core::simulate::InitSpec::Point(at.clone()),
            InitSpecConfig::Gaussian { mean, std } => sgdlab_core::simulate::InitSpec::Gaussian {
                mean: mean.clone(),
                std: *std,
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub enum GridInitConfig {
    Uniform,
    Gaussian { mean: Vec<f64>, std: Vec<f64> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub enum ExitDomainConfig {
    Ball { center: Vec<f64>, radius: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub experiment: String,
    pub model: ModelSpec,
    pub hyperparams: HyperparamsSpec,
    /// one of "sgd", "nsgd", "euler-maruyama"
    pub scheme: String,
    pub init: InitSpecConfig,
    pub n_trajectories: usize,
    pub n_steps: usize,
    /// Euler-Maruyama time step; discrete schemes step by `eta`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    pub record_stride: usize,
    #[serde(default)]
    pub export_binary: bool,
    pub seed: u64,
    pub out_dir: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FokkerPlanckConfig {
    pub experiment: String,
    pub model: ModelSpec,
    pub hyperparams: HyperparamsSpec,
    pub grid: GridSpecConfig,
    pub init: GridInitConfig,
    pub t_end: f64,
    /// Record a density snapshot every this many time units (0 = ends only).
    #[serde(default)]
    pub record_interval: f64,
    #[serde(default)]
    pub export_binary: bool,
    pub seed: u64,
    pub out_dir: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KramersSpec {
    pub x1: Vec<f64>,
    pub z: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetBoundSpec {
    pub center: Vec<f64>,
    pub r0: f64,
    pub direction: Vec<f64>,
    pub beta: f64,
    pub lambda_cap: f64,
    pub sigma: f64,
    #[serde(default = "default_probes")]
    pub n_probes: usize,
}

fn default_probes() -> usize {
    512
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExitTimeConfig {
    pub experiment: String,
    pub model: ModelSpec,
    pub hyperparams: HyperparamsSpec,
    pub domain: ExitDomainConfig,
    pub x0: Vec<f64>,
    pub dt: f64,
    pub n_trajectories: usize,
    /// Censoring horizon; defaults to 50x the certified upper bound.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    pub bounds: MetBoundSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kramers: Option<KramersSpec>,
    pub seed: u64,
    pub out_dir: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConcentrationConfig {
    pub experiment: String,
    pub model: ModelSpec,
    pub hyperparams: HyperparamsSpec,
    pub center: Vec<f64>,
    pub r0: f64,
    /// Cut-off shoulder fraction in (0, 1].
    pub shoulder: f64,
    pub a: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Matrix bound `Q <= sigma I` on the basin.
    pub sigma: f64,
    /// Convexity rate; probed on the shoulder ball when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    pub init: InitSpecConfig,
    pub n_trajectories: usize,
    pub dt: f64,
    pub record_stride: usize,
    pub seed: u64,
    pub out_dir: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntropyConfig {
    pub experiment: String,
    pub model: ModelSpec,
    pub hyperparams: HyperparamsSpec,
    pub grid: GridSpecConfig,
    pub init: GridInitConfig,
    /// Isotropic bound used by the Gibbs reference density.
    pub reference_sigma: f64,
    pub t_end: f64,
    pub n_records: usize,
    pub seed: u64,
    pub out_dir: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KramersExperimentConfig {
    pub experiment: String,
    pub model: ModelSpec,
    pub eps2_list: Vec<f64>,
    pub x1: Vec<f64>,
    pub domain: ExitDomainConfig,
    pub x0: Vec<f64>,
    pub dt: f64,
    pub n_trajectories: usize,
    /// Horizon = this factor times the Kramers prediction per eps.
    #[serde(default = "default_horizon_factor")]
    pub horizon_factor: f64,
    pub seed: u64,
    pub out_dir: String,
}

fn default_horizon_factor() -> f64 {
    40.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeakOrderConfig {
    pub experiment: String,
    pub model: ModelSpec,
    pub batch_size: usize,
    pub etas: Vec<f64>,
    pub n_steps_at_max: usize,
    /// Only "second-moment" is supported.
    pub observable: String,
    pub init: InitSpecConfig,
    pub n_trajectories: usize,
    pub seed: u64,
    pub out_dir: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SteadyProbeConfig {
    pub experiment: String,
    pub model: ModelSpec,
    pub hyperparams: HyperparamsSpec,
    pub deltas: Vec<f64>,
    pub grid: GridSpecConfig,
    pub init: GridInitConfig,
    pub horizon: f64,
    pub ball_radii: Vec<f64>,
    #[serde(default = "default_drift_threshold")]
    pub drift_threshold: f64,
    pub seed: u64,
    pub out_dir: String,
}

fn default_drift_threshold() -> f64 {
    1e-4
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionConfig {
    pub experiment: String,
    pub model: ModelSpec,
    pub hyperparams: HyperparamsSpec,
    pub init: InitSpecConfig,
    pub n_trajectories: usize,
    pub n_steps: usize,
    /// Box searched for minima.
    pub minima_box_lo: Vec<f64>,
    pub minima_box_hi: Vec<f64>,
    #[serde(default = "default_starts")]
    pub n_starts: usize,
    /// Compare basin weights with the Gibbs well masses at this sigma.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gibbs_sigma: Option<f64>,
    pub seed: u64,
    pub out_dir: String,
}

fn default_starts() -> usize {
    32
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WassersteinConfig {
    pub experiment: String,
    /// Single-column CSV files of 1D samples (header `x`).
    pub samples_a: String,
    pub samples_b: String,
    pub seed: u64,
    pub out_dir: String,
}

/// A parsed experiment configuration.
#[derive(Debug, Clone)]
pub enum ExperimentConfig {
    Simulate(SimulateConfig),
    FokkerPlanck(FokkerPlanckConfig),
    ExitTime(ExitTimeConfig),
    Concentration(ConcentrationConfig),
    Entropy(EntropyConfig),
    Kramers(KramersExperimentConfig),
    WeakOrder(WeakOrderConfig),
    SteadyProbe(SteadyProbeConfig),
    Partition(PartitionConfig),
    Wasserstein(WassersteinConfig),
}

pub const EXPERIMENT_NAMES: [&str; 10] = [
    "simulate",
    "fokker-planck",
    "exit-time",
    "concentration",
    "entropy",
    "kramers",
    "weak-order",
    "steady-probe",
    "partition",
    "wasserstein",
];

impl ExperimentConfig {
    /// Parse a config JSON, enforcing the strict schema and the match between
    /// the `experiment` tag and the invoked subcommand.
    pub fn from_json(raw: &str, subcommand: &str) -> anyhow::Result<Self> {
        #[derive(Deserialize)]
        struct Tag {
            experiment: String,
        }
        let tag: Tag = serde_json::from_str(raw).context("config must carry an `experiment` tag")?;
        if tag.experiment != subcommand {
            bail!(
                "config experiment `{}` does not match the `{}` subcommand",
                tag.experiment,
                subcommand
            );
        }
        let cfg = match subcommand {
            "simulate" => Self::Simulate(serde_json::from_str(raw)?),
            "fokker-planck" => Self::FokkerPlanck(serde_json::from_str(raw)?),
            "exit-time" => Self::ExitTime(serde_json::from_str(raw)?),
            "concentration" => Self::Concentration(serde_json::from_str(raw)?),
            "entropy" => Self::Entropy(serde_json::from_str(raw)?),
            "kramers" => Self::Kramers(serde_json::from_str(raw)?),
            "weak-order" => Self::WeakOrder(serde_json::from_str(raw)?),
            "steady-probe" => Self::SteadyProbe(serde_json::from_str(raw)?),
            "partition" => Self::Partition(serde_json::from_str(raw)?),
            "wasserstein" => Self::Wasserstein(serde_json::from_str(raw)?),
            other => bail!("unknown experiment `{other}`"),
        };
        Ok(cfg)
    }

    pub fn experiment(&self) -> &str {
        match self {
            Self::Simulate(c) => &c.experiment,
            Self::FokkerPlanck(c) => &c.experiment,
            Self::ExitTime(c) => &c.experiment,
            Self::Concentration(c) => &c.experiment,
            Self::Entropy(c) => &c.experiment,
            Self::Kramers(c) => &c.experiment,
            Self::WeakOrder(c) => &c.experiment,
            Self::SteadyProbe(c) => &c.experiment,
            Self::Partition(c) => &c.experiment,
            Self::Wasserstein(c) => &c.experiment,
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            Self::Simulate(c) => c.seed,
            Self::FokkerPlanck(c) => c.seed,
            Self::ExitTime(c) => c.seed,
            Self::Concentration(c) => c.seed,
            Self::Entropy(c) => c.seed,
            Self::Kramers(c) => c.seed,
            Self::WeakOrder(c) => c.seed,
            Self::SteadyProbe(c) => c.seed,
            Self::Partition(c) => c.seed,
            Self::Wasserstein(c) => c.seed,
        }
    }

    pub fn set_seed(&mut self, seed: u64) {
        match self {
            Self::Simulate(c) => c.seed = seed,
            Self::FokkerPlanck(c) => c.seed = seed,
            Self::ExitTime(c) => c.seed = seed,
            Self::Concentration(c) => c.seed = seed,
            Self::Entropy(c) => c.seed = seed,
            Self::Kramers(c) => c.seed = seed,
            Self::WeakOrder(c) => c.seed = seed,
            Self::SteadyProbe(c) => c.seed = seed,
            Self::Partition(c) => c.seed = seed,
            Self::Wasserstein(c) => c.seed = seed,
        }
    }

    pub fn out_dir(&self) -> &str {
        match self {
            Self::Simulate(c) => &c.out_dir,
            Self::FokkerPlanck(c) => &c.out_dir,
            Self::ExitTime(c) => &c.out_dir,
            Self::Concentration(c) => &c.out_dir,
            Self::Entropy(c) => &c.out_dir,
            Self::Kramers(c) => &c.out_dir,
            Self::WeakOrder(c) => &c.out_dir,
            Self::SteadyProbe(c) => &c.out_dir,
            Self::Partition(c) => &c.out_dir,
            Self::Wasserstein(c) => &c.out_dir,
        }
    }

    pub fn set_out_dir(&mut self, out: String) {
        match self {
            Self::Simulate(c) => c.out_dir = out,
            Self::FokkerPlanck(c) => c.out_dir = out,
            Self::ExitTime(c) => c.out_dir = out,
            Self::Concentration(c) => c.out_dir = out,
            Self::Entropy(c) => c.out_dir = out,
            Self::Kramers(c) => c.out_dir = out,
            Self::WeakOrder(c) => c.out_dir = out,
            Self::SteadyProbe(c) => c.out_dir = out,
            Self::Partition(c) => c.out_dir = out,
            Self::Wasserstein(c) => c.out_dir = out,
        }
    }

    pub fn to_json_pretty(&self) -> anyhow::Result<String> {
        let s = match self {
            Self::Simulate(c) => serde_json::to_string_pretty(c)?,
            Self::FokkerPlanck(c) => serde_json::to_string_pretty(c)?,
            Self::ExitTime(c) => serde_json::to_string_pretty(c)?,
            Self::Concentration(c) => serde_json::to_string_pretty(c)?,
            Self::Entropy(c) => serde_json::to_string_pretty(c)?,
            Self::Kramers(c) => serde_json::to_string_pretty(c)?,
            Self::WeakOrder(c) => serde_json::to_string_pretty(c)?,
            Self::SteadyProbe(c) => serde_json::to_string_pretty(c)?,
            Self::Partition(c) => serde_json::to_string_pretty(c)?,
            Self::Wasserstein(c) => serde_json::to_string_pretty(c)?,
        };
        Ok(s)
    }
}
