//! Drift-regime analysis: shrinking-ball mass tracking through a smooth
//! cut-off, second-moment bounds, and the concentration verification harness.
//!
//! The cut-off is the C^{1,2} approximation of the ball indicator
//! `phi(t, r) = 1` for `r <= R(t)`, two quadratic shoulders on
//! `(R, (1+d/2)R]` and `((1+d/2)R, (1+d)R]`, and `0` beyond, with the radius
//! law `R(t) = R0 e^{-(lambda/2)(t - t0)}`.

use crate::error::{Error, Result};
use crate::fokker_planck::GridDensity;
use crate::simulate::{mean_se, EnsembleTrace};

/// Parameters of the shrinking-ball cut-off.
#[derive(Debug, Clone)]
pub struct CutoffSpec {
    pub r0: f64,
    /// Shoulder fraction in (0, 1].
    pub delta: f64,
    /// Convexity rate driving the radius law.
    pub lambda: f64,
    pub t0: f64,
    pub center: Vec<f64>,
}

impl CutoffSpec {
    pub fn new(r0: f64, delta: f64, lambda: f64, t0: f64, center: Vec<f64>) -> Result<Self> {
        if !(r0 > 0.0) {
            return Err(Error::InvalidArgument("R0 must be positive".into()));
        }
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(Error::InvalidArgument("shoulder fraction must lie in (0, 1]".into()));
        }
        Ok(Self {
            r0,
            delta,
            lambda,
            t0,
            center,
        })
    }

    /// `R(t) = R0 e^{-(lambda/2)(t - t0)}`.
    pub fn radius(&self, t: f64) -> f64 {
        self.r0 * (-(self.lambda / 2.0) * (t - self.t0)).exp()
    }
}

/// The four-branch piecewise quadratic cut-off evaluated at radius `r`.
pub fn cutoff(spec: &CutoffSpec, t: f64, r: f64) -> f64 {
    let rt = spec.radius(t);
    let d = spec.delta;
    if r <= rt {
        1.0
    } else if r <= (1.0 + 0.5 * d) * rt {
        1.0 - 2.0 / (d * d * rt * rt) * (r - rt) * (r - rt)
    } else if r <= (1.0 + d) * rt {
        let w = (1.0 + d) * rt - r;
        2.0 / (d * d * rt * rt) * w * w
    } else {
        0.0
    }
}

/// State whose smoothed mass can be measured: a particle snapshot or a grid.
pub enum MassState<'a> {
    /// Flat trajectory-major positions, `n_traj * dim` values.
    Ensemble { positions: &'a [f64], dim: usize },
    Grid(&'a GridDensity),
}

/// `integral phi(t, |x - center|) rho` — cell sum for grids, sample mean with
/// a standard error for ensembles.
pub fn smoothed_mass(state: &MassState, spec: &CutoffSpec, t: f64) -> (f64, Option<f64>) {
    match state {
        MassState::Ensemble { positions, dim } => {
            let n = positions.len() / dim;
            let (m, se) = mean_se((0..n).map(|k| {
                let x = &positions[k * dim..(k + 1) * dim];
                let r = dist(x, &spec.center);
                cutoff(spec, t, r)
            }));
            (m, Some(se))
        }
        MassState::Grid(g) => {
            let vol = g.cell_volume();
            let mut acc = 0.0;
            for (idx, v) in g.values.iter().enumerate() {
                let x = g.cell_center(idx);
                acc += cutoff(spec, t, dist(&x, &spec.center)) * v;
            }
            (acc * vol, None)
        }
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// `integral |x - center|^2 rho`, with a standard error for ensembles.
pub fn second_moment(state: &MassState, center: &[f64]) -> (f64, Option<f64>) {
    match state {
        MassState::Ensemble { positions, dim } => {
            let n = positions.len() / dim;
            let (m, se) = mean_se((0..n).map(|k| {
                let x = &positions[k * dim..(k + 1) * dim];
                let d = dist(x, center);
                d * d
            }));
            (m, Some(se))
        }
        MassState::Grid(g) => (g.second_moment(center), None),
    }
}

/// The second-moment upper bound for a `lambda`-convex loss with
/// `tr Q <= sigma`:
/// `m(t) <= (m0 - 2 eps^2 sigma / lambda) e^{-lambda t} + 2 eps^2 sigma / lambda`.
pub fn second_moment_bound(m0: f64, lambda: f64, sigma: f64, eps: f64, t: f64) -> f64 {
    let floor = 2.0 * eps * eps * sigma / lambda;
    (m0 - floor) * (-lambda * t).exp() + floor
}

/// Chebyshev lower bound on the in-ball mass: `max(0, 1 - m2_bound / R^2)`.
pub fn chebyshev_lower_bound(radius: f64, m2_bound: f64) -> f64 {
    (1.0 - m2_bound / (radius * radius)).max(0.0)
}

/// The proof constant of the shrinking-ball estimate,
/// `C = (4 sigma d^2 / delta^2)(1 + (1+delta)/(1+delta/2))`.
pub fn concentration_error_constant(sigma: f64, dim: usize, delta: f64) -> f64 {
    4.0 * sigma * (dim * dim) as f64 / (delta * delta)
        * (1.0 + (1.0 + delta) / (1.0 + 0.5 * delta))
}

/// Error budget at horizon `T` for the exponential radius:
/// `eps^2 C / (R0^2 lambda) (e^{lambda T} - 1)`.
pub fn concentration_error_budget(
    eps: f64,
    sigma: f64,
    dim: usize,
    delta: f64,
    r0: f64,
    lambda: f64,
    t_span: f64,
) -> f64 {
    eps * eps * concentration_error_constant(sigma, dim, delta) / (r0 * r0 * lambda)
        * ((lambda * t_span).exp() - 1.0)
}

/// The certified horizon `T_eps = (2/lambda) log(R0 / (a eps^alpha))`.
pub fn concentration_horizon(lambda: f64, r0: f64, a: f64, alpha: f64, eps: f64) -> f64 {
    2.0 / lambda * (r0 / (a * eps.powf(alpha))).ln()
}

/// One sampled time of a concentration run.
#[derive(Debug, Clone)]
pub struct ConcentrationSample {
    pub t: f64,
    pub smoothed_mass: f64,
    pub se: Option<f64>,
}

/// Outcome of checking a run against the local mass-concentration statement.
#[derive(Debug, Clone)]
pub struct ConcentrationReport {
    pub t_eps: f64,
    pub lambda_used: f64,
    pub series: Vec<ConcentrationSample>,
    /// Minimum over the window of `mass(t) - (mass(t0) - beta)`.
    pub min_margin: f64,
    /// Margin with 2 standard errors of slack on ensemble data.
    pub pass: bool,
    /// Proof-side budget `C eps^2 int R(t)^{-2} dt`; sufficient, not sharp.
    pub error_budget: f64,
}

/// Check the smoothed mass of a run over `[t0, t0 + T_eps]` against
/// `mass(t) >= mass(t0) - beta`.
///
/// The radius law uses the supplied convexity rate minus a 5% haircut so the
/// hypothesis `R' >= -(lambda/2) R` survives estimation error.
#[allow(clippy::too_many_arguments)]
pub fn concentration_report(
    trace: &EnsembleTrace,
    center: &[f64],
    r0: f64,
    shoulder: f64,
    lambda_est: f64,
    sigma: f64,
    a: f64,
    alpha: f64,
    beta: f64,
    eps: f64,
) -> Result<ConcentrationReport> {
    if !(lambda_est > 0.0) {
        return Err(Error::InvalidArgument(
            "concentration needs a positive convexity estimate".into(),
        ));
    }
    let lambda = 0.95 * lambda_est;
    let t0 = *trace.times.first().ok_or_else(|| Error::InvalidArgument("empty trace".into()))?;
    let t_eps = concentration_horizon(lambda, r0, a, alpha, eps);
    let t_end = t0 + t_eps;
    let last = *trace.times.last().unwrap();
    if last + 1e-12 < t_end {
        return Err(Error::WindowNotCovered { t0, t1: t_end });
    }
    let spec = CutoffSpec::new(r0, shoulder, lambda, t0, center.to_vec())?;
    let mut series = Vec::new();
    for (i, &t) in trace.times.iter().enumerate() {
        if t > t_end + 1e-12 {
            break;
        }
        let state = MassState::Ensemble {
            positions: trace.snapshot(i),
            dim: trace.dim,
        };
        let (m, se) = smoothed_mass(&state, &spec, t);
        series.push(ConcentrationSample {
            t,
            smoothed_mass: m,
            se,
        });
    }
    let m0 = series[0].smoothed_mass;
    let mut min_margin = f64::INFINITY;
    let mut pass = true;
    for s in &series {
        let margin = s.smoothed_mass - (m0 - beta);
        min_margin = min_margin.min(margin);
        let slack = 2.0 * s.se.unwrap_or(0.0);
        if margin + slack < 0.0 {
            pass = false;
        }
    }
    let error_budget =
        concentration_error_budget(eps, sigma, trace.dim, shoulder, r0, lambda, t_eps);
    Ok(ConcentrationReport {
        t_eps,
        lambda_used: lambda,
        series,
        min_margin,
        pass,
        error_budget,
    })
}
