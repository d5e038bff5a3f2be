//! Long-time diagnostics: relative entropy and its production, decay-rate
//! fits, weighted moment norms, Wasserstein distances, and the local
//! linearization around minima with its Gaussian/point-mass steady states.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fokker_planck::{lyapunov_solve, GaussianState, GridDensity};
use crate::linalg;
use crate::model::{DiffusionField, LossModel, Minimum};
use crate::simulate::fit_slope;

/// Reference-density floor: cells where the steady state underflows this are
/// excluded from entropy integrals and their mass is accounted separately.
const RHO_INF_FLOOR: f64 = 1e-300;
const EXCLUDED_MASS_BUDGET: f64 = 1e-8;

/// Relative entropy `E(rho | rho_inf) = 1/2 int (rho/rho_inf - 1)^2 rho_inf`.
pub fn relative_entropy(rho: &GridDensity, rho_inf: &GridDensity) -> Result<f64> {
    check_same_grid(rho, rho_inf)?;
    let vol = rho.cell_volume();
    let mut acc = 0.0;
    let mut excluded = 0.0;
    for (a, b) in rho.values.iter().zip(&rho_inf.values) {
        if *b < RHO_INF_FLOOR {
            excluded += a * vol;
            continue;
        }
        let r = a / b - 1.0;
        acc += 0.5 * r * r * b * vol;
    }
    if excluded > EXCLUDED_MASS_BUDGET {
        return Err(Error::EntropyUndefined { excluded });
    }
    Ok(acc)
}

/// Fisher information (entropy production of the flow up to the `eps^2`
/// factor): `I = int grad(rho/rho_inf)^T Q grad(rho/rho_inf) rho_inf`,
/// with the ratio gradient taken by central differences.
pub fn fisher_information(
    rho: &GridDensity,
    rho_inf: &GridDensity,
    field: &DiffusionField,
) -> Result<f64> {
    check_same_grid(rho, rho_inf)?;
    let d = rho.dim();
    let vol = rho.cell_volume();
    let n_total = rho.values.len();
    // ratio field with floor masking
    let mut ratio = vec![0.0; n_total];
    let mut masked = vec![false; n_total];
    let mut excluded = 0.0;
    for i in 0..n_total {
        if rho_inf.values[i] < RHO_INF_FLOOR {
            masked[i] = true;
            excluded += rho.values[i] * vol;
        } else {
            ratio[i] = rho.values[i] / rho_inf.values[i];
        }
    }
    if excluded > EXCLUDED_MASS_BUDGET {
        return Err(Error::EntropyUndefined { excluded });
    }
    let mut gbuf = vec![0.0; d];
    let mut mbuf = vec![0.0; d];
    let mut q = DMatrix::zeros(d, d);
    let mut grad = vec![0.0; d];
    let mut acc = 0.0;
    for idx in 0..n_total {
        if masked[idx] {
            continue;
        }
        let mut ok = true;
        for a in 0..d {
            let (lo, hi, h2) = neighbor_pair(rho, idx, a);
            match (lo, hi) {
                (Some(l), Some(r)) if !masked[l] && !masked[r] => {
                    grad[a] = (ratio[r] - ratio[l]) / h2;
                }
                _ => {
                    // one-sided at the box edge
                    let h = rho.axes[a].h;
                    match (lo, hi) {
                        (None, Some(r)) if !masked[r] => grad[a] = (ratio[r] - ratio[idx]) / h,
                        (Some(l), None) if !masked[l] => grad[a] = (ratio[idx] - ratio[l]) / h,
                        _ => ok = false,
                    }
                }
            }
        }
        if !ok {
            continue;
        }
        let x = rho.cell_center(idx);
        field.noise_matrix_into(&x, &mut q, &mut gbuf, &mut mbuf);
        let mut form = 0.0;
        for i in 0..d {
            for j in 0..d {
                form += grad[i] * q[(i, j)] * grad[j];
            }
        }
        acc += form.max(0.0) * rho_inf.values[idx] * vol;
    }
    Ok(acc)
}

fn check_same_grid(a: &GridDensity, b: &GridDensity) -> Result<()> {
    if a.axes != b.axes {
        return Err(Error::InvalidArgument("densities live on different grids".into()));
    }
    Ok(())
}

/// Flat indices of the two axis-`a` neighbors of `idx` (None past the edge),
/// plus the centered-difference denominator `2h`.
fn neighbor_pair(g: &GridDensity, idx: usize, a: usize) -> (Option<usize>, Option<usize>, f64) {
    let h2 = 2.0 * g.axes[a].h;
    match g.dim() {
        1 => {
            let n = g.axes[0].n;
            let lo = if idx > 0 { Some(idx - 1) } else { None };
            let hi = if idx + 1 < n { Some(idx + 1) } else { None };
            (lo, hi, h2)
        }
        2 => {
            let n1 = g.axes[1].n;
            let (i, j) = (idx / n1, idx % n1);
            if a == 0 {
                let lo = if i > 0 { Some((i - 1) * n1 + j) } else { None };
                let hi = if i + 1 < g.axes[0].n {
                    Some((i + 1) * n1 + j)
                } else {
                    None
                };
                (lo, hi, h2)
            } else {
                let lo = if j > 0 { Some(i * n1 + j - 1) } else { None };
                let hi = if j + 1 < n1 { Some(i * n1 + j + 1) } else { None };
                (lo, hi, h2)
            }
        }
        _ => unreachable!(),
    }
}

/// Time series of entropy, Fisher information, and second moments along a
/// flow, with an optional decay fit.
#[derive(Debug, Clone, Default)]
pub struct EntropyTrace {
    pub times: Vec<f64>,
    pub entropy: Vec<f64>,
    pub fisher: Vec<f64>,
    pub second_moments: Vec<f64>,
}

impl EntropyTrace {
    pub fn push(&mut self, t: f64, e: f64, i: f64, m2: f64) {
        self.times.push(t);
        self.entropy.push(e);
        self.fisher.push(i);
        self.second_moments.push(m2);
    }

    /// Default fit window: the last half of the trace (which also excludes
    /// the first 10% of transients).
    pub fn default_window(&self) -> (f64, f64) {
        let t0 = *self.times.first().unwrap_or(&0.0);
        let t1 = *self.times.last().unwrap_or(&0.0);
        (t0 + 0.5 * (t1 - t0), t1)
    }
}

/// Exponential decay fit of an entropy trace over `window`.
#[derive(Debug, Clone)]
pub struct DecayFit {
    /// `lambda_hat = -slope` of `log E` against `t`.
    pub rate: f64,
    pub window: (f64, f64),
    pub rms_residual: f64,
    /// The entropy failed to decrease somewhere in the window.
    pub non_monotone: bool,
    pub n_points: usize,
}

/// Least-squares decay rate of `log E` over the window. The entropy must be
/// strictly positive there; a non-monotone stretch is flagged, not fatal.
pub fn entropy_decay_rate(trace: &EntropyTrace, window: (f64, f64)) -> Result<DecayFit> {
    let pts: Vec<(f64, f64)> = trace
        .times
        .iter()
        .zip(&trace.entropy)
        .filter(|(t, _)| **t >= window.0 - 1e-12 && **t <= window.1 + 1e-12)
        .map(|(t, e)| (*t, *e))
        .collect();
    if pts.len() < 2 {
        return Err(Error::WindowNotCovered {
            t0: window.0,
            t1: window.1,
        });
    }
    if pts.iter().any(|(_, e)| *e <= 0.0) {
        return Err(Error::InvalidArgument(
            "entropy must be strictly positive on the fit window".into(),
        ));
    }
    let non_monotone = pts.windows(2).any(|w| w[1].1 > w[0].1 * (1.0 + 1e-10) + 1e-300);
    let logs: Vec<(f64, f64)> = pts.iter().map(|(t, e)| (*t, e.ln())).collect();
    let slope = fit_slope(&logs).ok_or(Error::InvalidArgument("degenerate fit window".into()))?;
    let n = logs.len() as f64;
    let mt = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let rms = (logs
        .iter()
        .map(|(t, y)| {
            let pred = my + slope * (t - mt);
            (y - pred) * (y - pred)
        })
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(DecayFit {
        rate: -slope,
        window,
        rms_residual: rms,
        non_monotone,
        n_points: logs.len(),
    })
}

/// Weighted total-variation norm of a signed grid measure given as the
/// difference `a - b`: `sum (1+|x|^2)^{k/2} |a - b| vol`.
pub fn moment_norm_diff(a: &GridDensity, b: &GridDensity, k: f64) -> Result<f64> {
    check_same_grid(a, b)?;
    let vol = a.cell_volume();
    let mut acc = 0.0;
    for (idx, (va, vb)) in a.values.iter().zip(&b.values).enumerate() {
        let x = a.cell_center(idx);
        let r2: f64 = x.iter().map(|v| v * v).sum();
        acc += (1.0 + r2).powf(0.5 * k) * (va - vb).abs();
    }
    Ok(acc * vol)
}

/// Weighted-sample analogue of [`moment_norm_diff`] for signed weights.
pub fn moment_norm_weighted(points: &[f64], dim: usize, weights: &[f64], k: f64) -> f64 {
    let n = weights.len();
    let mut acc = 0.0;
    for i in 0..n {
        let x = &points[i * dim..(i + 1) * dim];
        let r2: f64 = x.iter().map(|v| v * v).sum();
        acc += (1.0 + r2).powf(0.5 * k) * weights[i].abs();
    }
    acc
}

/// Exact 1D 2-Wasserstein distance between equal-weight samples: the root
/// mean squared difference of matched order statistics.
pub fn wasserstein2_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::MismatchedMasses(format!(
            "sample counts {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(|x, y| x.partial_cmp(y).unwrap());
    sb.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let ms: f64 = sa
        .iter()
        .zip(&sb)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.len() as f64;
    Ok(ms.sqrt())
}

/// 1D 2-Wasserstein distance between grid densities via the L^2 distance of
/// quantile functions on a uniform quantile grid.
pub fn wasserstein2_grid_1d(a: &GridDensity, b: &GridDensity, n_quantiles: usize) -> Result<f64> {
    if a.dim() != 1 || b.dim() != 1 {
        return Err(Error::InvalidArgument("grid Wasserstein is 1D only".into()));
    }
    let (ma, mb) = (a.mass(), b.mass());
    if (ma - mb).abs() > 1e-8 * ma.max(mb) {
        return Err(Error::MismatchedMasses(format!("masses {ma} vs {mb}")));
    }
    let k = n_quantiles.max(16);
    let qa = GridQuantile::new(a);
    let qb = GridQuantile::new(b);
    let mut acc = 0.0;
    for i in 0..k {
        let u = (i as f64 + 0.5) / k as f64;
        let d = qa.quantile(u) - qb.quantile(u);
        acc += d * d;
    }
    Ok((acc / k as f64).sqrt())
}

struct GridQuantile {
    edges: Vec<f64>,
    cdf: Vec<f64>,
}

impl GridQuantile {
    fn new(g: &GridDensity) -> Self {
        let n = g.axes[0].n;
        let h = g.axes[0].h;
        let mut edges = Vec::with_capacity(n + 1);
        let mut cdf = Vec::with_capacity(n + 1);
        edges.push(g.axes[0].min);
        cdf.push(0.0);
        let total: f64 = g.values.iter().sum::<f64>() * h;
        let mut acc = 0.0;
        for i in 0..n {
            acc += g.values[i] * h / total;
            edges.push(g.axes[0].min + (i as f64 + 1.0) * h);
            cdf.push(acc.min(1.0));
        }
        Self { edges, cdf }
    }

    fn quantile(&self, u: f64) -> f64 {
        let n = self.cdf.len();
        let mut lo = 0usize;
        let mut hi = n - 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.cdf[mid] < u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (c0, c1) = (self.cdf[lo], self.cdf[hi]);
        if c1 <= c0 {
            return self.edges[hi];
        }
        let s = (u - c0) / (c1 - c0);
        self.edges[lo] + s * (self.edges[hi] - self.edges[lo])
    }
}

/// Closed-form 2-Wasserstein distance between Gaussians:
/// `sqrt(|mu_a - mu_b|^2 + tr(S_a + S_b - 2 (S_b^{1/2} S_a S_b^{1/2})^{1/2}))`.
pub fn gaussian_w2(a: &GaussianState, b: &GaussianState) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    let tol_a = 1e-12 * (1.0 + a.cov.trace().abs());
    let tol_b = 1e-12 * (1.0 + b.cov.trace().abs());
    let sb_half = linalg::sym_sqrt_psd(&b.cov, tol_b)?;
    let inner = &sb_half * &a.cov * &sb_half;
    let cross = linalg::sym_sqrt_psd(&inner, 1e-10 * (1.0 + inner.trace().abs()) + tol_a)?;
    let mean2: f64 = a
        .mean
        .iter()
        .zip(b.mean.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    let bures = (a.cov.trace() + b.cov.trace() - 2.0 * cross.trace()).max(0.0);
    Ok((mean2 + bures).sqrt())
}

/// Product-coupling upper bound on the distance to a Gaussian-times-point-mass
/// limit: `sqrt(d_x^2 + m_y)` from the x-marginal distance and the y second
/// moment.
pub fn product_w2_bound(x_marginal_distance: f64, y_second_moment: f64) -> f64 {
    (x_marginal_distance * x_marginal_distance + y_second_moment).sqrt()
}

/// Steady state of the flow linearized at a minimum.
#[derive(Debug, Clone)]
pub enum LinearSteadyState {
    /// Condition (II) holds: full-rank Gaussian.
    Gaussian(GaussianState),
    /// Kernel and range of `Q0` are invariant under the Hessian: Gaussian on
    /// the reachable block, point mass along the kernel (covariance is
    /// singular exactly there).
    ProductWithPointMass {
        state: GaussianState,
        kernel_basis: DMatrix<f64>,
    },
    /// The Hessian mixes the kernel with its complement; no steady-state
    /// claim is made.
    NonProductDegenerate,
}

/// Local data of the flow linearized at a minimum `x_i`.
#[derive(Debug, Clone)]
pub struct LinearizedMinimum {
    pub x: Vec<f64>,
    pub q0: DMatrix<f64>,
    pub hess: DMatrix<f64>,
    pub hormander_ok: bool,
    pub steady_state: LinearSteadyState,
}

const KERNEL_ANGLE_TOL: f64 = 1e-8;

/// Record `Q(x_i)` and `C = D^2 L(x_i)`, decide condition (II), and build the
/// `eps^2`-scaled steady state of the linearized flow where one exists.
pub fn linearize_at_minimum(
    model: &LossModel,
    field: &DiffusionField,
    x: &[f64],
    eps: f64,
) -> Result<LinearizedMinimum> {
    let bundle = model.evaluate(x)?;
    let gnorm = bundle.grad.norm();
    if gnorm > 1e-6 {
        return Err(Error::NotAMinimum(format!("|grad L| = {gnorm:e}")));
    }
    let hess = bundle.hess;
    let hmin = linalg::sym_min_eigenvalue(&hess);
    if hmin < -1e-8 {
        return Err(Error::NotAMinimum(format!("Hessian eigenvalue {hmin:e}")));
    }
    let q0 = field.covariance_matrix(x);
    let d = model.dim();
    let mean = DVector::from_column_slice(x);

    // Full Hörmander attempt first: needs a positive-definite Hessian.
    if hmin > 1e-10 {
        let sol = lyapunov_solve(&q0, &hess)?;
        if sol.hormander_ok {
            return Ok(LinearizedMinimum {
                x: x.to_vec(),
                q0,
                hess,
                hormander_ok: true,
                steady_state: LinearSteadyState::Gaussian(GaussianState::new(
                    mean,
                    eps * eps * &sol.k,
                )),
            });
        }
    }

    // Split along ker(Q0) and test block invariance of the Hessian.
    let eig = q0.clone().symmetric_eigen();
    let q_scale = eig.eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1e-300);
    let mut kernel_cols = Vec::new();
    let mut range_cols = Vec::new();
    for i in 0..d {
        if eig.eigenvalues[i] <= KERNEL_ANGLE_TOL * q_scale {
            kernel_cols.push(i);
        } else {
            range_cols.push(i);
        }
    }
    let kernel_basis = basis_from(&eig.eigenvectors, &kernel_cols);
    let range_basis = basis_from(&eig.eigenvectors, &range_cols);
    let c_scale = linalg::fro_norm(&hess).max(1e-300);
    let mixing = if kernel_cols.is_empty() || range_cols.is_empty() {
        0.0
    } else {
        linalg::fro_norm(&(range_basis.transpose() * &hess * &kernel_basis)) / c_scale
    };
    if mixing > KERNEL_ANGLE_TOL {
        return Ok(LinearizedMinimum {
            x: x.to_vec(),
            q0,
            hess,
            hormander_ok: false,
            steady_state: LinearSteadyState::NonProductDegenerate,
        });
    }

    // Pure point mass when the diffusion vanishes entirely.
    if range_cols.is_empty() {
        let mut state = GaussianState::new(mean, DMatrix::zeros(d, d));
        state.degenerate_axes = (0..d).collect();
        return Ok(LinearizedMinimum {
            x: x.to_vec(),
            q0,
            hess,
            hormander_ok: false,
            steady_state: LinearSteadyState::ProductWithPointMass {
                state,
                kernel_basis,
            },
        });
    }

    // Gaussian on the reachable block.
    let qb = range_basis.transpose() * &q0 * &range_basis;
    let cb = range_basis.transpose() * &hess * &range_basis;
    if linalg::sym_min_eigenvalue(&cb) <= 1e-10 {
        return Ok(LinearizedMinimum {
            x: x.to_vec(),
            q0,
            hess,
            hormander_ok: false,
            steady_state: LinearSteadyState::NonProductDegenerate,
        });
    }
    let sol = lyapunov_solve(&qb, &cb)?;
    if !sol.hormander_ok {
        return Ok(LinearizedMinimum {
            x: x.to_vec(),
            q0,
            hess,
            hormander_ok: false,
            steady_state: LinearSteadyState::NonProductDegenerate,
        });
    }
    let mut cov = &range_basis * (eps * eps * &sol.k) * range_basis.transpose();
    linalg::symmetrize(&mut cov);
    let mut state = GaussianState::new(mean, cov);
    // Mark axis-aligned kernel directions for downstream reporting.
    for col in 0..kernel_basis.ncols() {
        let v = kernel_basis.column(col);
        for i in 0..d {
            if (v[i].abs() - 1.0).abs() < 1e-9 {
                state.degenerate_axes.push(i);
            }
        }
    }
    state.degenerate_axes.sort_unstable();
    Ok(LinearizedMinimum {
        x: x.to_vec(),
        q0,
        hess,
        hormander_ok: false,
        steady_state: LinearSteadyState::ProductWithPointMass {
            state,
            kernel_basis,
        },
    })
}

fn basis_from(vectors: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    let d = vectors.nrows();
    let mut b = DMatrix::zeros(d, cols.len());
    for (j, &c) in cols.iter().enumerate() {
        b.set_column(j, &vectors.column(c));
    }
    b
}

/// Basin weights of an ensemble snapshot.
#[derive(Debug, Clone)]
pub struct PartitionResult {
    /// One weight per supplied minimum; they sum to the assigned fraction.
    pub weights: Vec<f64>,
    pub unassigned_fraction: f64,
    /// Unassigned fraction above 5%.
    pub unreliable: bool,
}

/// Assign each particle to the basin its gradient-descent path reaches and
/// report the mass fractions. Descent uses the fixed step `1/lambda_max`
/// over the minima Hessians and terminates on a gradient tolerance.
pub fn mass_partition(
    positions: &[f64],
    dim: usize,
    minima: &[Minimum],
    model: &LossModel,
) -> Result<PartitionResult> {
    if minima.is_empty() {
        return Err(Error::InvalidArgument("need at least one minimum".into()));
    }
    let lambda_max = minima
        .iter()
        .map(|m| {
            linalg::sym_eigenvalues(&m.hess)
                .last()
                .copied()
                .unwrap_or(0.0)
        })
        .fold(0.0_f64, f64::max);
    if !(lambda_max > 0.0) {
        return Err(Error::InvalidArgument(
            "minima Hessians must have a positive top eigenvalue".into(),
        ));
    }
    let step = 1.0 / lambda_max;
    let grad_tol = 1e-6;
    let max_iters = 50_000;
    let assign_tol = {
        // fraction of the smallest separation between minima, or an absolute
        // fallback for a single basin
        let mut sep = f64::INFINITY;
        for i in 0..minima.len() {
            for j in (i + 1)..minima.len() {
                let d2: f64 = minima[i]
                    .x
                    .iter()
                    .zip(&minima[j].x)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                sep = sep.min(d2.sqrt());
            }
        }
        if sep.is_finite() {
            0.25 * sep
        } else {
            1e-2
        }
    };
    let n = positions.len() / dim;
    let mut counts = vec![0usize; minima.len()];
    let mut unassigned = 0usize;
    let mut x = vec![0.0; dim];
    let mut g = vec![0.0; dim];
    let mut scratch = vec![0.0; dim];
    for k in 0..n {
        x.copy_from_slice(&positions[k * dim..(k + 1) * dim]);
        let mut converged = false;
        for _ in 0..max_iters {
            model.grad(&x, &mut g, &mut scratch);
            if linalg::norm(&g) <= grad_tol {
                converged = true;
                break;
            }
            for i in 0..dim {
                x[i] -= step * g[i];
            }
            if !x.iter().all(|v| v.is_finite()) {
                converged = false;
                break;
            }
        }
        if !converged {
            unassigned += 1;
            continue;
        }
        let mut best = usize::MAX;
        let mut best_d = f64::INFINITY;
        for (i, m) in minima.iter().enumerate() {
            let d2: f64 = m.x.iter().zip(&x).map(|(a, b)| (a - b) * (a - b)).sum();
            if d2.sqrt() < best_d {
                best_d = d2.sqrt();
                best = i;
            }
        }
        if best_d <= assign_tol {
            counts[best] += 1;
        } else {
            unassigned += 1;
        }
    }
    let weights: Vec<f64> = counts.iter().map(|c| *c as f64 / n as f64).collect();
    let unassigned_fraction = unassigned as f64 / n as f64;
    Ok(PartitionResult {
        weights,
        unassigned_fraction,
        unreliable: unassigned_fraction > 0.05,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fokker_planck::{init_grid, GridSpec, InitialDensity};
    use crate::model::{catalog, BoxDomain, DiffusionField};
    use approx::assert_relative_eq;
    use std::sync::Arc;

    fn grid_gaussian(lo: f64, hi: f64, n: usize, mean: f64, std: f64) -> GridDensity {
        init_grid(
            &GridSpec::new_1d(lo, hi, n),
            &InitialDensity::Gaussian {
                mean: vec![mean],
                std: vec![std],
            },
        )
        .unwrap()
    }

    #[test]
    fn entropy_of_a_density_against_itself_is_zero() {
        let g = grid_gaussian(-6.0, 6.0, 200, 0.0, 1.0);
        assert_eq!(relative_entropy(&g, &g).unwrap(), 0.0);
    }

    #[test]
    fn entropy_matches_direct_quadrature_for_two_gaussians() {
        // rho = N(0,1), rho_inf = N(0, 1.2): compare the grid entropy with a
        // fine trapezoid quadrature of the same integrand.
        let (s2, t2) = (1.0_f64, 1.2_f64);
        let g = grid_gaussian(-9.0, 9.0, 6000, 0.0, s2.sqrt());
        let ginf = grid_gaussian(-9.0, 9.0, 6000, 0.0, t2.sqrt());
        let got = relative_entropy(&g, &ginf).unwrap();
        let n = 400_000usize;
        let (a, b) = (-9.0, 9.0);
        let h = (b - a) / n as f64;
        let pdf = |x: f64, v: f64| (-(x * x) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt();
        let integrand = |x: f64| {
            let r = pdf(x, s2) / pdf(x, t2) - 1.0;
            0.5 * r * r * pdf(x, t2)
        };
        let mut quad = 0.5 * (integrand(a) + integrand(b));
        for i in 1..n {
            quad += integrand(a + i as f64 * h);
        }
        quad *= h;
        assert!(
            (got - quad).abs() <= 1e-6,
            "grid {got} vs quadrature {quad}"
        );
    }

    #[test]
    fn fisher_vanishes_at_equilibrium_and_for_zero_diffusion() {
        let g = grid_gaussian(-6.0, 6.0, 300, 0.0, 1.0);
        let shifted = grid_gaussian(-6.0, 6.0, 300, 0.4, 1.0);
        let noisy = DiffusionField::bare(Arc::new(catalog::quadratic_noisy(1, 1.0, 1.0, 1)));
        assert_relative_eq!(fisher_information(&g, &g, &noisy).unwrap(), 0.0, epsilon = 1e-20);
        let silent = DiffusionField::bare(Arc::new(catalog::quadratic(1, 1.0, None)));
        assert_relative_eq!(
            fisher_information(&shifted, &g, &silent).unwrap(),
            0.0,
            epsilon = 1e-20
        );
        assert!(fisher_information(&shifted, &g, &noisy).unwrap() > 0.0);
    }

    #[test]
    fn synthetic_exponential_decay_is_fit_exactly() {
        let mut tr = EntropyTrace::default();
        for i in 0..100 {
            let t = i as f64 * 0.05;
            tr.push(t, 3.0 * (-2.0 * t).exp(), 0.0, 0.0);
        }
        let fit = entropy_decay_rate(&tr, tr.default_window()).unwrap();
        assert_relative_eq!(fit.rate, 2.0, epsilon = 1e-10);
        assert!(!fit.non_monotone);
        assert!(fit.rms_residual < 1e-12);
    }

    #[test]
    fn constant_entropy_fits_a_zero_rate_and_flags() {
        let mut tr = EntropyTrace::default();
        for i in 0..50 {
            tr.push(i as f64, 1.0, 0.0, 0.0);
        }
        let fit = entropy_decay_rate(&tr, tr.default_window()).unwrap();
        assert_relative_eq!(fit.rate, 0.0, epsilon = 1e-14);
        // constant is weakly non-monotone under the strict-decrease test:
        // equality is tolerated, so no flag
        assert!(!fit.non_monotone);
        // but an increasing stretch flags
        let mut tr2 = EntropyTrace::default();
        for i in 0..50 {
            tr2.push(i as f64, 1.0 + 0.01 * i as f64, 0.0, 0.0);
        }
        let fit2 = entropy_decay_rate(&tr2, tr2.default_window()).unwrap();
        assert!(fit2.non_monotone);
    }

    #[test]
    fn moment_norm_of_a_point_mass() {
        // point mass at the origin, k = 2: (1 + 0)^1 * 1 = 1
        assert_relative_eq!(
            moment_norm_weighted(&[0.0], 1, &[1.0], 2.0),
            1.0,
            epsilon = 1e-15
        );
        // k = 0 is the total-variation mass
        assert_relative_eq!(
            moment_norm_weighted(&[3.0, -2.0], 1, &[0.5, -0.25], 0.0),
            0.75,
            epsilon = 1e-15
        );
    }

    #[test]
    fn moment_norm_diff_vanishes_only_on_equal_grids() {
        let a = grid_gaussian(-5.0, 5.0, 100, 0.0, 0.7);
        let b = grid_gaussian(-5.0, 5.0, 100, 0.3, 0.7);
        assert_eq!(moment_norm_diff(&a, &a, 2.0).unwrap(), 0.0);
        assert!(moment_norm_diff(&a, &b, 2.0).unwrap() > 0.0);
    }

    #[test]
    fn wasserstein_1d_point_masses() {
        assert_eq!(wasserstein2_1d(&[1.0], &[4.0]).unwrap(), 3.0);
        assert_eq!(wasserstein2_1d(&[1.0, 1.0], &[1.0, 1.0]).unwrap(), 0.0);
        assert!(wasserstein2_1d(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn wasserstein_1d_sorts_before_matching() {
        let a = [3.0, 1.0, 2.0];
        let b = [2.0, 3.0, 1.0];
        assert_eq!(wasserstein2_1d(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn grid_wasserstein_sees_a_mean_shift() {
        let a = grid_gaussian(-6.0, 6.0, 800, 0.0, 0.5);
        let b = grid_gaussian(-6.0, 6.0, 800, 0.3, 0.5);
        let w = wasserstein2_grid_1d(&a, &b, 2048).unwrap();
        assert_relative_eq!(w, 0.3, max_relative = 0.02);
    }

    #[test]
    fn gaussian_w2_closed_forms() {
        let a = GaussianState::new(DVector::from_vec(vec![0.0]), DMatrix::from_element(1, 1, 1.0));
        let b = GaussianState::new(DVector::from_vec(vec![0.0]), DMatrix::from_element(1, 1, 2.25));
        // same mean, sds 1 and 1.5: distance |1 - 1.5| = 0.5
        assert_relative_eq!(gaussian_w2(&a, &b).unwrap(), 0.5, epsilon = 1e-10);
        assert_relative_eq!(gaussian_w2(&a, &a).unwrap(), 0.0, epsilon = 1e-12);
        let c = GaussianState::new(DVector::from_vec(vec![2.0]), DMatrix::from_element(1, 1, 1.0));
        assert_relative_eq!(gaussian_w2(&a, &c).unwrap(), 2.0, epsilon = 1e-10);
    }

    #[test]
    fn product_bound_composes() {
        assert_eq!(product_w2_bound(0.0, 0.0), 0.0);
        assert_eq!(product_w2_bound(0.0, 4.0), 2.0);
        assert_relative_eq!(product_w2_bound(3.0, 16.0), 5.0, epsilon = 1e-15);
    }

    #[test]
    fn linearization_with_full_rank_noise_is_gaussian() {
        let m = Arc::new(catalog::quadratic_noisy(2, 2.0, 1.0, 1));
        let f = DiffusionField::bare(m.clone());
        let lin = linearize_at_minimum(&m, &f, &[0.0, 0.0], 0.1).unwrap();
        assert!(lin.hormander_ok);
        match &lin.steady_state {
            LinearSteadyState::Gaussian(g) => {
                // K = Q0 / (2 lambda) * 2 = Q0/lambda; cov = eps^2 (sigma/d)/lambda I
                let want = 0.01 * (1.0 / 2.0) / 2.0;
                assert_relative_eq!(g.cov[(0, 0)], want, max_relative = 1e-9);
                assert_relative_eq!(g.cov[(1, 1)], want, max_relative = 1e-9);
            }
            other => panic!("expected Gaussian, got {other:?}"),
        }
    }

    #[test]
    fn linearization_without_noise_is_a_point_mass() {
        let m = Arc::new(catalog::quadratic(2, 1.0, None));
        let f = DiffusionField::bare(m.clone());
        let lin = linearize_at_minimum(&m, &f, &[0.0, 0.0], 0.1).unwrap();
        assert!(!lin.hormander_ok);
        match &lin.steady_state {
            LinearSteadyState::ProductWithPointMass { state, .. } => {
                assert_eq!(state.degenerate_axes, vec![0, 1]);
                assert!(state.cov.iter().all(|v| *v == 0.0));
            }
            other => panic!("expected point mass, got {other:?}"),
        }
    }

    #[test]
    fn linearization_of_the_degenerate_quadratic_is_a_product() {
        // Q = diag(sigma, 0), C = lambda I: Gaussian in x1 times delta in x2.
        let (lam, sigma, eps) = (1.5, 0.8, 0.2);
        let m = Arc::new(catalog::quadratic_degenerate(2, lam, sigma));
        let f = DiffusionField::bare(m.clone());
        let lin = linearize_at_minimum(&m, &f, &[0.0, 0.0], eps).unwrap();
        assert!(!lin.hormander_ok);
        match &lin.steady_state {
            LinearSteadyState::ProductWithPointMass { state, .. } => {
                assert_relative_eq!(
                    state.cov[(0, 0)],
                    eps * eps * sigma / lam,
                    max_relative = 1e-9
                );
                assert!(state.cov[(1, 1)].abs() < 1e-15);
                assert_eq!(state.degenerate_axes, vec![1]);
            }
            other => panic!("expected product state, got {other:?}"),
        }
    }

    #[test]
    fn rejects_points_that_are_not_minima() {
        let m = Arc::new(catalog::double_well_1d(1.0));
        let f = DiffusionField::bare(m.clone());
        assert!(linearize_at_minimum(&m, &f, &[0.5], 0.1).is_err()); // gradient
        assert!(linearize_at_minimum(&m, &f, &[0.0], 0.1).is_err()); // maximum
    }

    #[test]
    fn partition_assigns_everything_at_a_minimum() {
        let m = catalog::double_well_1d(1.0);
        let dom = BoxDomain::new(vec![-2.0], vec![2.0]).unwrap();
        let minima = crate::model::locate_minima(&m, &dom, 16).unwrap();
        let positions = vec![-1.0; 32];
        let p = mass_partition(&positions, 1, &minima, &m).unwrap();
        assert_relative_eq!(p.weights[0], 1.0, epsilon = 1e-15);
        assert_eq!(p.weights[1], 0.0);
        assert_eq!(p.unassigned_fraction, 0.0);
    }

    #[test]
    fn partition_splits_a_symmetric_cloud_evenly() {
        let m = catalog::double_well_1d(1.0);
        let dom = BoxDomain::new(vec![-2.0], vec![2.0]).unwrap();
        let minima = crate::model::locate_minima(&m, &dom, 16).unwrap();
        // symmetric positions around the barrier
        let mut positions = Vec::new();
        for i in 0..200 {
            let x = 0.05 + 1.6 * (i as f64 / 199.0);
            positions.push(x);
            positions.push(-x);
        }
        let p = mass_partition(&positions, 1, &minima, &m).unwrap();
        assert_relative_eq!(p.weights[0], 0.5, epsilon = 1e-12);
        assert_relative_eq!(p.weights[1], 0.5, epsilon = 1e-12);
        assert!(!p.unreliable);
    }
}
