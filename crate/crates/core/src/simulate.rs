//! Learning iterations and their continuous counterpart.
//!
//! The discrete schemes are
//! `SGD:  x <- x - (eta/b) sum_{i in B} grad L_i(x)` with a uniform batch `B`,
//! `NSGD: SGD + eta * Z`, `Z ~ N(0, delta I)`,
//! and the continuous surrogate is the Euler-Maruyama discretization of
//! `dX = -grad L(X) dt + sqrt(2 eps^2 Q(X)) dW` (with `Q_delta` when the
//! field is regularized).
//!
//! Batches are drawn uniformly without replacement. Trajectory `k` always
//! consumes stream `k` of the root seed, so ensembles are bit-reproducible
//! under any parallel schedule.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{BoxDomain, DiffusionField, Hyperparams, LossModel};
use crate::rng::{trajectory_stream, StreamRng};

/// Which iteration produced a trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Sgd,
    Nsgd,
    EulerMaruyama,
}

impl Scheme {
    pub fn tag(&self) -> &'static str {
        match self {
            Scheme::Sgd => "sgd",
            Scheme::Nsgd => "nsgd",
            Scheme::EulerMaruyama => "euler-maruyama",
        }
    }
}

/// Preallocated buffers for the hot stepping loops.
pub struct StepScratch {
    g: Vec<f64>,
    gi: Vec<f64>,
    mean: Vec<f64>,
    q: DMatrix<f64>,
    s: DMatrix<f64>,
    xi: Vec<f64>,
}

impl StepScratch {
    pub fn new(dim: usize) -> Self {
        Self {
            g: vec![0.0; dim],
            gi: vec![0.0; dim],
            mean: vec![0.0; dim],
            q: DMatrix::zeros(dim, dim),
            s: DMatrix::zeros(dim, dim),
            xi: vec![0.0; dim],
        }
    }
}

fn check_finite(x: &[f64], step: usize, trajectory: usize) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::DivergentUpdate { step, trajectory })
    }
}

/// One minibatch step in place. The batch is a uniform size-`b` subset of the
/// samples; a full batch consumes no randomness.
pub fn sgd_step_into(
    x: &mut [f64],
    model: &LossModel,
    hp: &Hyperparams,
    rng: &mut StreamRng,
    scratch: &mut StepScratch,
) -> Result<()> {
    let n = model.n_samples();
    let b = hp.batch_size;
    if b > n {
        return Err(Error::InvalidArgument(format!(
            "batch size {b} exceeds sample count {n}"
        )));
    }
    let d = x.len();
    let step = hp.eta / b as f64;
    if b == n {
        model.grad(x, &mut scratch.g, &mut scratch.gi);
        for i in 0..d {
            x[i] -= hp.eta * scratch.g[i];
        }
        return Ok(());
    }
    scratch.g.fill(0.0);
    for idx in rand::seq::index::sample(rng, n, b) {
        model.sample_grad(idx, x, &mut scratch.gi);
        for i in 0..d {
            scratch.g[i] += scratch.gi[i];
        }
    }
    for i in 0..d {
        x[i] -= step * scratch.g[i];
    }
    Ok(())
}

/// One SGD step, allocating variant.
pub fn sgd_step(x: &[f64], model: &LossModel, hp: &Hyperparams, rng: &mut StreamRng) -> Result<Vec<f64>> {
    let mut out = x.to_vec();
    let mut scratch = StepScratch::new(x.len());
    sgd_step_into(&mut out, model, hp, rng, &mut scratch)?;
    check_finite(&out, 0, 0)?;
    Ok(out)
}

/// One noisy step in place: the SGD step plus `eta * Z`, `Z ~ N(0, delta I)`.
/// `delta = 0` draws nothing and is bit-identical to [`sgd_step_into`].
pub fn nsgd_step_into(
    x: &mut [f64],
    model: &LossModel,
    hp: &Hyperparams,
    delta: f64,
    rng: &mut StreamRng,
    scratch: &mut StepScratch,
) -> Result<()> {
    sgd_step_into(x, model, hp, rng, scratch)?;
    if delta > 0.0 {
        let amp = hp.eta * delta.sqrt();
        for xi in x.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *xi += amp * z;
        }
    }
    Ok(())
}

/// One NSGD step, allocating variant.
pub fn nsgd_step(
    x: &[f64],
    model: &LossModel,
    hp: &Hyperparams,
    delta: f64,
    rng: &mut StreamRng,
) -> Result<Vec<f64>> {
    let mut out = x.to_vec();
    let mut scratch = StepScratch::new(x.len());
    nsgd_step_into(&mut out, model, hp, delta, rng, &mut scratch)?;
    check_finite(&out, 0, 0)?;
    Ok(out)
}

/// One Euler-Maruyama step in place:
/// `x <- x - grad L(x) dt + sqrt(2 eps^2 dt) S(x) xi` with `S S^T = Q(x)`
/// (or `Q_delta(x)` when the field carries `delta > 0`).
pub fn em_step_into(
    x: &mut [f64],
    model: &LossModel,
    field: &DiffusionField,
    eps: f64,
    dt: f64,
    rng: &mut StreamRng,
    scratch: &mut StepScratch,
) -> Result<()> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    let d = x.len();
    model.grad(x, &mut scratch.g, &mut scratch.gi);
    if eps > 0.0 {
        field.noise_matrix_into(x, &mut scratch.q, &mut scratch.gi, &mut scratch.mean);
        let tol = field.psd_tol(&scratch.q);
        linalg::sym_sqrt_psd_into(&scratch.q, tol, &mut scratch.s)?;
        for z in scratch.xi.iter_mut() {
            *z = rng.sample(StandardNormal);
        }
        let amp = (2.0 * eps * eps * dt).sqrt();
        for i in 0..d {
            let mut noise = 0.0;
            for j in 0..d {
                noise += scratch.s[(i, j)] * scratch.xi[j];
            }
            x[i] += -scratch.g[i] * dt + amp * noise;
        }
    } else {
        for i in 0..d {
            x[i] -= scratch.g[i] * dt;
        }
    }
    Ok(())
}

/// One Euler-Maruyama step, allocating variant.
pub fn em_step(
    x: &[f64],
    model: &LossModel,
    field: &DiffusionField,
    eps: f64,
    dt: f64,
    rng: &mut StreamRng,
) -> Result<Vec<f64>> {
    let mut out = x.to_vec();
    let mut scratch = StepScratch::new(x.len());
    em_step_into(&mut out, model, field, eps, dt, rng, &mut scratch)?;
    check_finite(&out, 0, 0)?;
    Ok(out)
}

/// Initial condition of an ensemble. Gaussian clouds consume `dim` normals
/// from the trajectory's own stream before any stepping.
#[derive(Debug, Clone)]
pub enum InitSpec {
    Point(Vec<f64>),
    Gaussian { mean: Vec<f64>, std: f64 },
}

impl InitSpec {
    fn draw(&self, rng: &mut StreamRng) -> Vec<f64> {
        match self {
            InitSpec::Point(p) => p.clone(),
            InitSpec::Gaussian { mean, std } => mean
                .iter()
                .map(|m| {
                    let z: f64 = rng.sample(StandardNormal);
                    m + std * z
                })
                .collect(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            InitSpec::Point(p) => p.len(),
            InitSpec::Gaussian { mean, .. } => mean.len(),
        }
    }
}

/// M trajectories sampled on a common time grid, plus the seed ledger needed
/// to reproduce them.
#[derive(Debug, Clone)]
pub struct EnsembleTrace {
    pub scheme: Scheme,
    pub dim: usize,
    pub n_traj: usize,
    pub root_seed: u64,
    pub times: Vec<f64>,
    /// `snapshots[t]` holds the positions at `times[t]`, trajectory-major
    /// (`n_traj * dim` values).
    pub snapshots: Vec<Vec<f64>>,
}

impl EnsembleTrace {
    pub fn snapshot(&self, t_idx: usize) -> &[f64] {
        &self.snapshots[t_idx]
    }

    pub fn particle(&self, t_idx: usize, traj: usize) -> &[f64] {
        &self.snapshots[t_idx][traj * self.dim..(traj + 1) * self.dim]
    }

    pub fn terminal(&self) -> &[f64] {
        self.snapshots.last().expect("trace has at least the initial snapshot")
    }

    /// Mean of `f` over the particles of snapshot `t_idx`, with standard error.
    pub fn observable_mean(&self, t_idx: usize, f: impl Fn(&[f64]) -> f64) -> (f64, f64) {
        mean_se((0..self.n_traj).map(|k| f(self.particle(t_idx, k))))
    }
}

pub(crate) fn mean_se(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let vals: Vec<f64> = values.collect();
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    if vals.len() < 2 {
        return (mean, 0.0);
    }
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Everything needed to advance one ensemble.
pub struct EnsembleConfig<'a> {
    pub scheme: Scheme,
    pub model: &'a LossModel,
    /// Required by [`Scheme::EulerMaruyama`].
    pub field: Option<&'a DiffusionField>,
    /// Required by the discrete schemes; `hp.eta` is also their time step.
    pub hp: Option<Hyperparams>,
    /// NSGD per-step noise level.
    pub delta: f64,
    /// Effective learning rate for Euler-Maruyama.
    pub eps: f64,
    /// Euler-Maruyama time step (ignored by the discrete schemes).
    pub dt: f64,
    pub init: InitSpec,
    pub n_traj: usize,
    pub n_steps: usize,
    pub record_stride: usize,
    pub root_seed: u64,
}

/// Advance `n_traj` independent trajectories for `n_steps` steps, recording
/// every `record_stride` steps (the initial state is always recorded).
pub fn run_ensemble(cfg: &EnsembleConfig) -> Result<EnsembleTrace> {
    if cfg.n_traj == 0 {
        return Err(Error::InvalidArgument("need at least one trajectory".into()));
    }
    if cfg.record_stride == 0 {
        return Err(Error::InvalidArgument("record stride must be positive".into()));
    }
    let d = cfg.model.dim();
    if cfg.init.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: cfg.init.dim(),
        });
    }
    let dt = match cfg.scheme {
        Scheme::EulerMaruyama => cfg.dt,
        _ => cfg.hp.as_ref().map(|h| h.eta).unwrap_or(0.0),
    };
    if cfg.scheme == Scheme::EulerMaruyama && cfg.field.is_none() {
        return Err(Error::InvalidArgument("Euler-Maruyama needs a diffusion field".into()));
    }
    if matches!(cfg.scheme, Scheme::Sgd | Scheme::Nsgd) && cfg.hp.is_none() {
        return Err(Error::InvalidArgument("discrete schemes need hyperparams".into()));
    }

    let record_idx: Vec<usize> = (0..=cfg.n_steps).filter(|n| n % cfg.record_stride == 0 || *n == cfg.n_steps).collect();
    let per_traj: Vec<Vec<Vec<f64>>> = (0..cfg.n_traj)
        .into_par_iter()
        .map(|k| -> Result<Vec<Vec<f64>>> {
            let mut rng = trajectory_stream(cfg.root_seed, k as u64);
            let mut x = cfg.init.draw(&mut rng);
            let mut scratch = StepScratch::new(d);
            let mut recs = Vec::with_capacity(record_idx.len());
            let mut next_rec = 0;
            if record_idx[next_rec] == 0 {
                recs.push(x.clone());
                next_rec += 1;
            }
            for n in 1..=cfg.n_steps {
                match cfg.scheme {
                    Scheme::Sgd => {
                        sgd_step_into(&mut x, cfg.model, cfg.hp.as_ref().unwrap(), &mut rng, &mut scratch)?
                    }
                    Scheme::Nsgd => nsgd_step_into(
                        &mut x,
                        cfg.model,
                        cfg.hp.as_ref().unwrap(),
                        cfg.delta,
                        &mut rng,
                        &mut scratch,
                    )?,
                    Scheme::EulerMaruyama => em_step_into(
                        &mut x,
                        cfg.model,
                        cfg.field.unwrap(),
                        cfg.eps,
                        dt,
                        &mut rng,
                        &mut scratch,
                    )?,
                }
                if !x.iter().all(|v| v.is_finite()) {
                    return Err(Error::DivergentUpdate { step: n, trajectory: k });
                }
                if next_rec < record_idx.len() && record_idx[next_rec] == n {
                    recs.push(x.clone());
                    next_rec += 1;
                }
            }
            Ok(recs)
        })
        .collect::<Result<Vec<_>>>()?;

    let times: Vec<f64> = record_idx.iter().map(|n| *n as f64 * dt).collect();
    let mut snapshots = vec![vec![0.0; cfg.n_traj * d]; times.len()];
    for (k, recs) in per_traj.iter().enumerate() {
        for (t, pos) in recs.iter().enumerate() {
            snapshots[t][k * d..(k + 1) * d].copy_from_slice(pos);
        }
    }
    Ok(EnsembleTrace {
        scheme: cfg.scheme,
        dim: d,
        n_traj: cfg.n_traj,
        root_seed: cfg.root_seed,
        times,
        snapshots,
    })
}

/// One entry of a weak-error curve.
#[derive(Debug, Clone)]
pub struct WeakErrorPoint {
    pub eta: f64,
    pub n_steps: usize,
    pub discrete_mean: f64,
    pub discrete_se: f64,
    pub continuous_mean: f64,
    pub continuous_se: f64,
    /// `|E[g(X_T)] - E[g(theta_n)]|`
    pub gap: f64,
    /// Monte Carlo noise above half the gap means the entry cannot resolve
    /// the weak error.
    pub resolved: bool,
}

/// Substep refinement of the continuous surrogate in the weak-error harness.
pub const WEAK_ERROR_SUBSTEPS: usize = 50;

/// Weak-error curve `eta -> |E[g(X_{n eta})] - E[g(theta_n)]|` at a fixed
/// physical horizon `T = n_steps_max * etas[0]`.
///
/// For every `eta`, the discrete expectation comes from `m` SGD runs and the
/// continuous one from `m` Euler-Maruyama runs of the matching SDE
/// (`eps^2 = eta/(2b)`) with substep `eta / 50`. Trajectory `k` of every run
/// reuses stream `k` of the root seed, pairing the estimates across `eta`
/// levels with common random numbers.
#[allow(clippy::too_many_arguments)]
pub fn weak_error_curve(
    model: &LossModel,
    field: &DiffusionField,
    g: impl Fn(&[f64]) -> f64 + Sync,
    etas: &[f64],
    n_steps_max: usize,
    batch_size: usize,
    m: usize,
    init: &InitSpec,
    root_seed: u64,
) -> Result<Vec<WeakErrorPoint>> {
    if etas.is_empty() || etas.windows(2).any(|w| w[1] >= w[0]) || etas.iter().any(|e| *e <= 0.0) {
        return Err(Error::InvalidArgument(
            "eta list must be positive and strictly decreasing".into(),
        ));
    }
    let horizon = n_steps_max as f64 * etas[0];
    let d = model.dim();
    let mut out = Vec::with_capacity(etas.len());
    for &eta in etas {
        let n_steps = (horizon / eta).round() as usize;
        let hp = Hyperparams::new(eta, batch_size)?;
        let eps = hp.eps();

        let disc: Vec<f64> = (0..m)
            .into_par_iter()
            .map(|k| -> Result<f64> {
                let mut rng = trajectory_stream(root_seed, k as u64);
                let mut x = init.draw(&mut rng);
                let mut scratch = StepScratch::new(d);
                for n in 1..=n_steps {
                    sgd_step_into(&mut x, model, &hp, &mut rng, &mut scratch)?;
                    check_finite(&x, n, k)?;
                }
                Ok(g(&x))
            })
            .collect::<Result<Vec<_>>>()?;

        let dt = eta / WEAK_ERROR_SUBSTEPS as f64;
        let cont: Vec<f64> = (0..m)
            .into_par_iter()
            .map(|k| -> Result<f64> {
                let mut rng = trajectory_stream(root_seed, k as u64);
                let mut x = init.draw(&mut rng);
                let mut scratch = StepScratch::new(d);
                for n in 1..=n_steps * WEAK_ERROR_SUBSTEPS {
                    em_step_into(&mut x, model, field, eps, dt, &mut rng, &mut scratch)?;
                    check_finite(&x, n, k)?;
                }
                Ok(g(&x))
            })
            .collect::<Result<Vec<_>>>()?;

        let (dm, dse) = mean_se(disc.into_iter());
        let (cm, cse) = mean_se(cont.into_iter());
        let gap = (dm - cm).abs();
        let se = (dse * dse + cse * cse).sqrt();
        out.push(WeakErrorPoint {
            eta,
            n_steps,
            discrete_mean: dm,
            discrete_se: dse,
            continuous_mean: cm,
            continuous_se: cse,
            gap,
            resolved: se <= 0.5 * gap,
        });
    }
    Ok(out)
}

/// Least-squares slope of `log(gap)` against `log(eta)` over resolved points.
pub fn log_log_slope(points: &[WeakErrorPoint]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.gap > 0.0)
        .map(|p| (p.eta.ln(), p.gap.ln()))
        .collect();
    fit_slope(&pts)
}

pub fn fit_slope(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        None
    } else {
        Some(sxy / sxx)
    }
}

/// Region whose first-exit time is sampled.
#[derive(Debug, Clone)]
pub enum ExitDomain {
    Ball { center: Vec<f64>, radius: f64 },
    Box(BoxDomain),
}

impl ExitDomain {
    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            ExitDomain::Ball { center, radius } => {
                let r2: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
                r2 <= radius * radius
            }
            ExitDomain::Box(b) => b.contains(x),
        }
    }

    /// Crossing fraction `s in (0, 1]` along the segment `p -> q` where the
    /// boundary is met (`p` inside, `q` outside).
    fn crossing_fraction(&self, p: &[f64], q: &[f64]) -> f64 {
        match self {
            ExitDomain::Ball { center, radius } => {
                let mut a = 0.0;
                let mut b = 0.0;
                let mut c = -radius * radius;
                for i in 0..p.len() {
                    let dp = p[i] - center[i];
                    let dq = q[i] - p[i];
                    a += dq * dq;
                    b += 2.0 * dp * dq;
                    c += dp * dp;
                }
                if a <= 0.0 {
                    return 1.0;
                }
                let disc = (b * b - 4.0 * a * c).max(0.0).sqrt();
                ((-b + disc) / (2.0 * a)).clamp(0.0, 1.0)
            }
            ExitDomain::Box(bx) => {
                let mut s = 1.0_f64;
                for i in 0..p.len() {
                    let dq = q[i] - p[i];
                    if q[i] < bx.lo[i] && dq < 0.0 {
                        s = s.min((bx.lo[i] - p[i]) / dq);
                    } else if q[i] > bx.hi[i] && dq > 0.0 {
                        s = s.min((bx.hi[i] - p[i]) / dq);
                    }
                }
                s.clamp(0.0, 1.0)
            }
        }
    }
}

/// One first-exit sample.
#[derive(Debug, Clone)]
pub struct ExitRecord {
    pub trajectory: usize,
    /// Exit time; equals the horizon when censored.
    pub tau: f64,
    pub exit_point: Vec<f64>,
    pub censored: bool,
}

/// Monte Carlo first-exit summary. Censored records never enter the mean.
#[derive(Debug, Clone)]
pub struct ExitTimeStats {
    pub mean: f64,
    pub se: f64,
    pub censoring_fraction: f64,
    /// More than half the records censored: the mean is a lower bound only.
    pub lower_bound_only: bool,
    pub records: Vec<ExitRecord>,
}

/// Sample first-exit times of the Euler-Maruyama dynamics from `domain`.
///
/// The exit time interpolates linearly in position between the last inside
/// and first outside states, removing the O(dt) overshoot bias.
#[allow(clippy::too_many_arguments)]
pub fn sample_exit_times(
    model: &LossModel,
    field: &DiffusionField,
    eps: f64,
    domain: &ExitDomain,
    x0: &[f64],
    dt: f64,
    n_traj: usize,
    horizon: f64,
    root_seed: u64,
) -> Result<ExitTimeStats> {
    if !domain.contains(x0) {
        return Err(Error::InvalidArgument(
            "start point must lie strictly inside the exit domain".into(),
        ));
    }
    if !(dt > 0.0) || !(horizon > 0.0) {
        return Err(Error::InvalidArgument("dt and horizon must be positive".into()));
    }
    let d = model.dim();
    let n_steps = (horizon / dt).ceil() as usize;
    let records: Vec<ExitRecord> = (0..n_traj)
        .into_par_iter()
        .map(|k| -> Result<ExitRecord> {
            let mut rng = trajectory_stream(root_seed, k as u64);
            let mut x = x0.to_vec();
            let mut prev = vec![0.0; d];
            let mut scratch = StepScratch::new(d);
            for n in 1..=n_steps {
                prev.copy_from_slice(&x);
                em_step_into(&mut x, model, field, eps, dt, &mut rng, &mut scratch)?;
                check_finite(&x, n, k)?;
                if !domain.contains(&x) {
                    let s = domain.crossing_fraction(&prev, &x);
                    let exit_point: Vec<f64> = prev
                        .iter()
                        .zip(&x)
                        .map(|(p, q)| p + s * (q - p))
                        .collect();
                    return Ok(ExitRecord {
                        trajectory: k,
                        tau: ((n - 1) as f64 + s) * dt,
                        exit_point,
                        censored: false,
                    });
                }
            }
            Ok(ExitRecord {
                trajectory: k,
                tau: horizon,
                exit_point: x,
                censored: true,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let uncensored: Vec<f64> = records.iter().filter(|r| !r.censored).map(|r| r.tau).collect();
    let cens = records.len() - uncensored.len();
    let censoring_fraction = cens as f64 / records.len() as f64;
    let (mean, se) = if uncensored.is_empty() {
        (f64::INFINITY, 0.0)
    } else {
        mean_se(uncensored.into_iter())
    };
    Ok(ExitTimeStats {
        mean,
        se,
        censoring_fraction,
        lower_bound_only: censoring_fraction > 0.5,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::catalog;
    use approx::assert_relative_eq;
    use std::sync::Arc;

    fn stream(seed: u64, k: u64) -> StreamRng {
        trajectory_stream(seed, k)
    }

    #[test]
    fn full_batch_sgd_is_plain_gradient_descent() {
        let m = catalog::quadratic(2, 1.0, None);
        let hp = Hyperparams::new(0.1, 1).unwrap();
        let mut rng = stream(1, 0);
        let out = sgd_step(&[1.0, 0.0], &m, &hp, &mut rng).unwrap();
        assert_relative_eq!(out[0], 0.9, epsilon = 1e-15);
        assert_relative_eq!(out[1], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn zero_learning_rate_is_identity() {
        let m = catalog::quadratic_noisy(1, 1.0, 1.0, 1);
        let hp = Hyperparams { eta: 0.0, batch_size: 1 };
        let mut rng = stream(1, 0);
        let out = sgd_step(&[0.7], &m, &hp, &mut rng).unwrap();
        assert_eq!(out[0], 0.7);
    }

    #[test]
    fn nsgd_with_zero_delta_matches_sgd_stream_for_stream() {
        let m = catalog::quadratic_noisy(2, 1.0, 1.0, 1);
        let hp = Hyperparams::new(0.05, 2).unwrap();
        let x = [0.4, -0.3];
        let a = sgd_step(&x, &m, &hp, &mut stream(9, 3)).unwrap();
        let b = nsgd_step(&x, &m, &hp, 0.0, &mut stream(9, 3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn em_with_zero_eps_is_explicit_euler() {
        let m = catalog::quadratic(2, 1.0, None);
        let f = DiffusionField::bare(Arc::new(catalog::quadratic(2, 1.0, None)));
        let out = em_step(&[1.0, 0.0], &m, &f, 0.0, 0.01, &mut stream(0, 0)).unwrap();
        assert_relative_eq!(out[0], 0.99, epsilon = 1e-15);
        assert_relative_eq!(out[1], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn degenerate_noise_ignores_the_seed() {
        let model = catalog::quadratic(1, 1.0, None);
        let f = DiffusionField::bare(Arc::new(catalog::quadratic(1, 1.0, None)));
        let a = em_step(&[0.5], &model, &f, 0.3, 0.01, &mut stream(1, 0)).unwrap();
        let b = em_step(&[0.5], &model, &f, 0.3, 0.01, &mut stream(2, 77)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ensembles_are_bit_reproducible() {
        let model = catalog::quadratic_noisy(2, 1.0, 1.0, 1);
        let field = DiffusionField::bare(Arc::new(catalog::quadratic_noisy(2, 1.0, 1.0, 1)));
        let cfg = EnsembleConfig {
            scheme: Scheme::EulerMaruyama,
            model: &model,
            field: Some(&field),
            hp: None,
            delta: 0.0,
            eps: 0.1,
            dt: 0.01,
            init: InitSpec::Gaussian { mean: vec![0.5, 0.5], std: 0.1 },
            n_traj: 64,
            n_steps: 50,
            record_stride: 10,
            root_seed: 2024,
        };
        let a = run_ensemble(&cfg).unwrap();
        let b = run_ensemble(&cfg).unwrap();
        assert_eq!(a.times, b.times);
        assert_eq!(a.snapshots, b.snapshots);
        assert_eq!(a.snapshots.len(), a.times.len());
        assert!(a.snapshots.iter().all(|s| s.len() == 64 * 2));
    }

    #[test]
    fn single_trajectory_trace_composes_single_steps() {
        let model = catalog::quadratic_noisy(1, 1.0, 0.5, 1);
        let hp = Hyperparams::new(0.05, 1).unwrap();
        let cfg = EnsembleConfig {
            scheme: Scheme::Sgd,
            model: &model,
            field: None,
            hp: Some(hp),
            delta: 0.0,
            eps: 0.0,
            dt: 0.0,
            init: InitSpec::Point(vec![1.0]),
            n_traj: 1,
            n_steps: 7,
            record_stride: 1,
            root_seed: 5,
        };
        let tr = run_ensemble(&cfg).unwrap();
        let mut rng = stream(5, 0);
        let mut x = vec![1.0];
        let mut scratch = StepScratch::new(1);
        assert_eq!(tr.snapshot(0), &x[..]);
        for n in 1..=7usize {
            sgd_step_into(&mut x, &model, &hp, &mut rng, &mut scratch).unwrap();
            assert_eq!(tr.snapshot(n), &x[..], "mismatch at step {n}");
        }
    }

    #[test]
    fn one_step_nsgd_moments_match_the_discrete_expansion() {
        // Single-sample model, so the batch term is deterministic:
        // E[step] = -eta grad L, E[step step^T] = eta^2 (grad grad^T + delta I).
        let model = catalog::quadratic(2, 1.0, Some(vec![-0.5, 0.25]));
        let hp = Hyperparams::new(0.05, 1).unwrap();
        let delta = 0.5;
        let x0 = [0.3, -0.2];
        let g = model.grad_vec(&x0);
        let m = 100_000;
        let mut sum = [0.0f64; 2];
        let mut sum_outer = [[0.0f64; 2]; 2];
        let mut sq = [[0.0f64; 2]; 2];
        for k in 0..m {
            let mut rng = stream(31, k as u64);
            let out = nsgd_step(&x0, &model, &hp, delta, &mut rng).unwrap();
            let l = [out[0] - x0[0], out[1] - x0[1]];
            for i in 0..2 {
                sum[i] += l[i];
                for j in 0..2 {
                    sum_outer[i][j] += l[i] * l[j];
                    sq[i][j] += l[i] * l[j] * l[i] * l[j];
                }
            }
        }
        let mf = m as f64;
        for i in 0..2 {
            let mean = sum[i] / mf;
            let want = -hp.eta * g[i];
            // var of one coordinate of the step: eta^2 delta
            let se = (hp.eta * hp.eta * delta / mf).sqrt();
            assert!(
                (mean - want).abs() <= 4.0 * se,
                "first moment {i}: {mean} vs {want} (se {se})"
            );
            for j in 0..2 {
                let m2 = sum_outer[i][j] / mf;
                let want2 = hp.eta * hp.eta
                    * (g[i] * g[j] + if i == j { delta } else { 0.0 });
                let var2 = (sq[i][j] / mf - m2 * m2).max(0.0);
                let se2 = (var2 / mf).sqrt();
                assert!(
                    (m2 - want2).abs() <= 4.0 * se2 + 1e-12,
                    "second moment ({i},{j}): {m2} vs {want2} (se {se2})"
                );
            }
        }
    }

    #[test]
    fn gradient_flow_decreases_the_loss() {
        let model = catalog::quadratic_aniso(vec![1.0, 4.0]);
        let field = DiffusionField::bare(Arc::new(catalog::quadratic_aniso(vec![1.0, 4.0])));
        // dt below 1/lambda_max = 0.25
        let mut x = vec![1.0, 1.0];
        let mut scratch = StepScratch::new(2);
        let mut rng = stream(0, 0);
        let mut prev = model.value(&x);
        for _ in 0..200 {
            em_step_into(&mut x, &model, &field, 0.0, 0.2, &mut rng, &mut scratch).unwrap();
            let v = model.value(&x);
            assert!(v <= prev + 1e-14);
            prev = v;
        }
    }

    #[test]
    fn ensemble_mean_follows_the_ode_mean() {
        let model = catalog::quadratic_noisy(2, 1.0, 1.0, 1);
        let field = DiffusionField::bare(Arc::new(catalog::quadratic_noisy(2, 1.0, 1.0, 1)));
        let t = 1.0;
        let dt = 0.002;
        let cfg = EnsembleConfig {
            scheme: Scheme::EulerMaruyama,
            model: &model,
            field: Some(&field),
            hp: None,
            delta: 0.0,
            eps: 0.1,
            dt,
            init: InitSpec::Point(vec![1.0, -0.5]),
            n_traj: 40_000,
            n_steps: (t / dt) as usize,
            record_stride: 1000,
            root_seed: 77,
        };
        let tr = run_ensemble(&cfg).unwrap();
        let last = tr.times.len() - 1;
        for (i, x0) in [1.0, -0.5].iter().enumerate() {
            let (mean, se) = tr.observable_mean(last, |x| x[i]);
            let want = x0 * (-t).exp();
            assert!(
                (mean - want).abs() <= 3.0 * se,
                "coordinate {i}: {mean} vs {want} (se {se})"
            );
        }
    }

    #[test]
    fn exit_from_a_strict_minimum_without_noise_censors_everything() {
        let model = catalog::quadratic(2, 1.0, None);
        let field = DiffusionField::bare(Arc::new(catalog::quadratic(2, 1.0, None)));
        let dom = ExitDomain::Ball { center: vec![0.0, 0.0], radius: 1.0 };
        let stats =
            sample_exit_times(&model, &field, 0.0, &dom, &[0.2, 0.1], 0.01, 32, 5.0, 3).unwrap();
        assert_eq!(stats.censoring_fraction, 1.0);
        assert!(stats.lower_bound_only);
        assert!(stats.mean.is_infinite());
    }

    #[test]
    fn driftless_exit_matches_the_met_ode_solution() {
        // L constant, Q = sigma: mean exit from (-R, R) at 0 is R^2/(2 eps^2 sigma).
        let sigma = 1.0_f64;
        let model = catalog::linear_pair_1d(sigma.sqrt());
        let field = DiffusionField::bare(Arc::new(catalog::linear_pair_1d(sigma.sqrt())));
        let eps2 = 0.5_f64;
        let dom = ExitDomain::Box(BoxDomain::new(vec![-1.0], vec![1.0]).unwrap());
        let stats = sample_exit_times(
            &model,
            &field,
            eps2.sqrt(),
            &dom,
            &[0.0],
            2.0e-4,
            4000,
            50.0,
            11,
        )
        .unwrap();
        let want = 1.0 / (2.0 * eps2 * sigma);
        assert!(stats.censoring_fraction < 0.01);
        assert!(
            (stats.mean - want).abs() <= 3.0 * stats.se,
            "{} vs {} (se {})",
            stats.mean,
            want,
            stats.se
        );
    }

    #[test]
    fn exit_mean_is_stable_under_time_step_refinement() {
        let sigma = 1.0_f64;
        let model = catalog::linear_pair_1d(sigma.sqrt());
        let field = DiffusionField::bare(Arc::new(catalog::linear_pair_1d(sigma.sqrt())));
        let dom = ExitDomain::Box(BoxDomain::new(vec![-1.0], vec![1.0]).unwrap());
        let coarse = sample_exit_times(&model, &field, 0.5f64.sqrt(), &dom, &[0.0], 4.0e-4, 3000, 50.0, 21).unwrap();
        let fine = sample_exit_times(&model, &field, 0.5f64.sqrt(), &dom, &[0.0], 1.0e-4, 3000, 50.0, 22).unwrap();
        let se = (coarse.se * coarse.se + fine.se * fine.se).sqrt();
        assert!(
            (coarse.mean - fine.mean).abs() <= se,
            "dt bias visible: {} vs {} (se {})",
            coarse.mean,
            fine.mean,
            se
        );
    }

    #[test]
    fn weak_error_on_a_constant_observable_is_zero() {
        let model = catalog::quadratic_noisy(1, 1.0, 1.0, 1);
        let field = DiffusionField::bare(Arc::new(catalog::quadratic_noisy(1, 1.0, 1.0, 1)));
        let pts = weak_error_curve(
            &model,
            &field,
            |_| 1.0,
            &[0.1, 0.05],
            5,
            1,
            200,
            &InitSpec::Point(vec![1.0]),
            3,
        )
        .unwrap();
        for p in &pts {
            assert_eq!(p.gap, 0.0);
        }
    }
}
