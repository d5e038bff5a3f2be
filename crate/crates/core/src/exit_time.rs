//! Diffusion-regime analysis: bounds on the mean exit time
//! `u(x) = E[tau_Omega^x]` solving `-eps^2 tr(Q D^2 u) + grad L . grad u = 1`
//! with zero boundary data, a 1D finite-difference solver for the
//! non-degenerate case, and Kramers escape-rate predictions.

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{BoxDomain, DiffusionField, LossModel};
use crate::rng::{ball_probe_set, box_probe_set};

/// Bounds on the mean exit time, with the constants that produced them.
#[derive(Debug, Clone)]
pub struct MetBounds {
    pub lower: f64,
    /// `f64::INFINITY` when the upper-bound hypotheses fail.
    pub upper: f64,
    pub direction: Vec<f64>,
    pub sigma: f64,
    pub beta: f64,
    pub lambda_cap: f64,
    pub r0: f64,
    pub r_v: f64,
    pub r_start: f64,
    pub eps: f64,
    pub dim: usize,
}

/// Lower bound `(R0^2 - r^2) / (2 eps^2 sigma d)` for a `lambda`-convex loss
/// with `Q <= sigma I` on the ball. `r = 0` gives the supremum bound.
pub fn met_lower_bound(r0: f64, r: f64, eps: f64, sigma: f64, dim: usize) -> Result<f64> {
    if !(r0 > 0.0) || r < 0.0 || r > r0 {
        return Err(Error::InvalidArgument("need 0 <= r <= R0 with R0 > 0".into()));
    }
    if !(eps > 0.0 && sigma > 0.0) {
        return Err(Error::InvalidArgument("eps and sigma must be positive".into()));
    }
    Ok((r0 * r0 - r * r) / (2.0 * eps * eps * sigma * dim as f64))
}

/// Upper bound `(2/Lambda)(e^{Lambda Rv^2/(2 beta eps^2)} - e^{Lambda r^2/(2 beta eps^2)})`
/// under the directional non-degeneracy assumption. Overflows report `+inf`.
pub fn met_upper_bound(r_v: f64, r: f64, eps: f64, beta: f64, lambda_cap: f64) -> Result<f64> {
    if !(r_v > 0.0) || r < 0.0 || r > r_v {
        return Err(Error::InvalidArgument("need 0 <= r <= Rv with Rv > 0".into()));
    }
    if !(eps > 0.0 && beta > 0.0 && lambda_cap > 0.0) {
        return Err(Error::InvalidArgument(
            "eps, beta, Lambda must be positive".into(),
        ));
    }
    let scale = 1.0 / (2.0 * beta * eps * eps);
    let big = (lambda_cap * r_v * r_v * scale).exp();
    let small = (lambda_cap * r * r * scale).exp();
    Ok(2.0 / lambda_cap * (big - small))
}

/// Region probed by [`assumption_probe`].
#[derive(Debug, Clone)]
pub enum ProbeDomain {
    Ball { center: Vec<f64>, radius: f64 },
    Box(BoxDomain),
}

impl ProbeDomain {
    fn probes(&self, n: usize) -> Vec<Vec<f64>> {
        match self {
            ProbeDomain::Ball { center, radius } => ball_probe_set(center, *radius, n),
            ProbeDomain::Box(b) => box_probe_set(&b.lo, &b.hi, n),
        }
    }

    /// `Rv = max |v . x|` over the domain.
    pub fn directional_radius(&self, v: &[f64]) -> f64 {
        match self {
            ProbeDomain::Ball { center, radius } => {
                linalg::dot(center, v).abs() + radius * linalg::norm(v)
            }
            ProbeDomain::Box(b) => {
                // extreme point picks the corner maximizing |v.x|
                let mut hi = 0.0;
                let mut lo = 0.0;
                for i in 0..v.len() {
                    if v[i] >= 0.0 {
                        hi += v[i] * b.hi[i];
                        lo += v[i] * b.lo[i];
                    } else {
                        hi += v[i] * b.lo[i];
                        lo += v[i] * b.hi[i];
                    }
                }
                hi.abs().max(lo.abs())
            }
        }
    }
}

/// Verdict of a numerical hypothesis probe.
#[derive(Debug, Clone)]
pub enum ProbeVerdict {
    Pass,
    /// First probe point violating the assumption.
    Witness(Vec<f64>),
}

impl ProbeVerdict {
    pub fn passed(&self) -> bool {
        matches!(self, ProbeVerdict::Pass)
    }
}

/// Check the directional non-degeneracy assumption on a deterministic probe
/// set: `v^T Q(x) v >= beta` and
/// `(v . grad L(x))(v . x) <= Lambda (v . x)^2 + eps^2 beta / 2`.
#[allow(clippy::too_many_arguments)]
pub fn assumption_probe(
    model: &LossModel,
    field: &DiffusionField,
    domain: &ProbeDomain,
    v: &[f64],
    beta: f64,
    lambda_cap: f64,
    eps: f64,
    n_probes: usize,
) -> Result<ProbeVerdict> {
    let nrm = linalg::norm(v);
    if (nrm - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidArgument("direction v must be a unit vector".into()));
    }
    let d = model.dim();
    let mut g = vec![0.0; d];
    let mut scratch = vec![0.0; d];
    for x in domain.probes(n_probes.max(1)) {
        let q = field.covariance_matrix(&x);
        let mut qv = 0.0;
        for i in 0..d {
            for j in 0..d {
                qv += v[i] * q[(i, j)] * v[j];
            }
        }
        if qv < beta - 1e-12 {
            return Ok(ProbeVerdict::Witness(x));
        }
        model.grad(&x, &mut g, &mut scratch);
        let vx = linalg::dot(v, &x);
        let vg = linalg::dot(v, &g);
        if vg * vx > lambda_cap * vx * vx + 0.5 * eps * eps * beta + 1e-12 {
            return Ok(ProbeVerdict::Witness(x));
        }
    }
    Ok(ProbeVerdict::Pass)
}

/// Evaluate both MET bounds for the ball `B_r0(x0)` (lower) and the probe
/// domain (upper), certifying hypotheses numerically. A failed upper-bound
/// probe withholds the bound (`upper = +inf`) and surfaces the witness.
pub struct MetBoundsOutcome {
    pub bounds: MetBounds,
    pub sigma_verdict: ProbeVerdict,
    pub upper_verdict: ProbeVerdict,
}

#[allow(clippy::too_many_arguments)]
pub fn met_bounds(
    model: &LossModel,
    field: &DiffusionField,
    domain: &ProbeDomain,
    x_start: &[f64],
    center: &[f64],
    r0: f64,
    v: &[f64],
    beta: f64,
    lambda_cap: f64,
    sigma: f64,
    eps: f64,
    n_probes: usize,
) -> Result<MetBoundsOutcome> {
    let d = model.dim();
    let r_start = x_start
        .iter()
        .zip(center)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    // sigma certification: largest Q eigenvalue over the probe set
    let mut sigma_verdict = ProbeVerdict::Pass;
    for x in domain.probes(n_probes.max(1)) {
        let q = field.covariance_matrix(&x);
        let top = linalg::sym_eigenvalues(&q).last().copied().unwrap_or(0.0);
        if top > sigma + 1e-12 {
            sigma_verdict = ProbeVerdict::Witness(x);
            break;
        }
    }
    let lower = met_lower_bound(r0, r_start.min(r0), eps, sigma, d)?;
    let upper_verdict = assumption_probe(model, field, domain, v, beta, lambda_cap, eps, n_probes)?;
    let r_v = domain.directional_radius(v);
    let upper = if upper_verdict.passed() {
        met_upper_bound(r_v, r_start.min(r_v), eps, beta, lambda_cap)?
    } else {
        f64::INFINITY
    };
    Ok(MetBoundsOutcome {
        bounds: MetBounds {
            lower,
            upper,
            direction: v.to_vec(),
            sigma,
            beta,
            lambda_cap,
            r0,
            r_v,
            r_start,
            eps,
            dim: d,
        },
        sigma_verdict,
        upper_verdict,
    })
}

/// Grid solution of the 1D mean-exit-time problem.
#[derive(Debug, Clone)]
pub struct Met1d {
    pub xl: f64,
    pub xr: f64,
    /// Node coordinates including both boundary nodes.
    pub nodes: Vec<f64>,
    /// `u` at the nodes; zero at both ends.
    pub values: Vec<f64>,
}

impl Met1d {
    /// Linear interpolation of `u` at `x`.
    pub fn eval(&self, x: f64) -> f64 {
        if x <= self.xl || x >= self.xr {
            return 0.0;
        }
        let h = self.nodes[1] - self.nodes[0];
        let j = (((x - self.xl) / h).floor() as usize).min(self.nodes.len() - 2);
        let s = (x - self.nodes[j]) / h;
        self.values[j] * (1.0 - s) + self.values[j + 1] * s
    }
}

/// Solve `-eps^2 q(x) u'' + L'(x) u' = 1` on `(xl, xr)` with `u = 0` at both
/// ends, by central differencing of `u''` and upwinding of `u'`.
///
/// Requires non-degenerate scalar diffusion `q >= q_min > 0` on the interval.
pub fn solve_met_1d(
    model: &LossModel,
    q: &dyn Fn(f64) -> f64,
    eps: f64,
    interval: (f64, f64),
    n_cells: usize,
) -> Result<Met1d> {
    if model.dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: model.dim(),
        });
    }
    let (xl, xr) = interval;
    if !(xr > xl) || n_cells < 4 {
        return Err(Error::InvalidArgument("need xr > xl and at least 4 cells".into()));
    }
    let n = n_cells;
    let h = (xr - xl) / n as f64;
    let nodes: Vec<f64> = (0..=n).map(|i| xl + i as f64 * h).collect();
    let mut qmin = f64::INFINITY;
    for &x in &nodes {
        qmin = qmin.min(q(x));
    }
    if !(qmin > 0.0) {
        return Err(Error::DegenerateDiffusion { qmin });
    }
    let m = n - 1; // interior nodes
    let mut lower = vec![0.0; m];
    let mut diag = vec![0.0; m];
    let mut upper = vec![0.0; m];
    let rhs = vec![1.0; m];
    let mut g = vec![0.0; 1];
    let mut scratch = vec![0.0; 1];
    for i in 0..m {
        let x = nodes[i + 1];
        let dcoef = eps * eps * q(x);
        model.grad(&[x], &mut g, &mut scratch);
        let a = g[0];
        // -D u'' : tridiagonal (-1, 2, -1) * D/h^2
        diag[i] += 2.0 * dcoef / (h * h);
        lower[i] -= dcoef / (h * h);
        upper[i] -= dcoef / (h * h);
        // +a u' with upwinding on the sign of a
        if a >= 0.0 {
            // u' ~ (u_i - u_{i-1})/h
            diag[i] += a / h;
            lower[i] -= a / h;
        } else {
            diag[i] -= a / h;
            upper[i] += a / h;
        }
    }
    let interior = linalg::solve_tridiagonal(&lower, &diag, &upper, &rhs)?;
    let mut values = vec![0.0; n + 1];
    values[1..n].copy_from_slice(&interior);
    Ok(Met1d {
        xl,
        xr,
        nodes,
        values,
    })
}

/// Which Kramers formula to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KramersMode {
    OneDim,
    MultiDim,
}

/// Kramers escape-time prediction from the minimum `x1` over the saddle `z`:
/// 1D `2 pi / sqrt(L''(x1)|L''(z)|) e^{(L(z)-L(x1))/eps^2}`, and for d >= 2
/// `2 pi / |mu_1(z)| sqrt(|det D^2L(z)| / det D^2L(x1)) e^{dL/eps^2}` with
/// `mu_1(z)` the unique negative Hessian eigenvalue at the saddle.
pub fn kramers_estimate(
    model: &LossModel,
    x1: &[f64],
    z: &[f64],
    eps: f64,
    mode: KramersMode,
) -> Result<f64> {
    let b1 = model.evaluate(x1)?;
    let bz = model.evaluate(z)?;
    let barrier = bz.value - b1.value;
    let boltz = (barrier / (eps * eps)).exp();
    match mode {
        KramersMode::OneDim => {
            if model.dim() != 1 {
                return Err(Error::DimensionMismatch {
                    expected: 1,
                    got: model.dim(),
                });
            }
            let l1 = b1.hess[(0, 0)];
            let lz = bz.hess[(0, 0)];
            if l1 <= 0.0 || lz >= 0.0 {
                return Err(Error::SaddleSignature {
                    eigenvalues: vec![l1, lz],
                });
            }
            Ok(2.0 * std::f64::consts::PI / (l1 * lz.abs()).sqrt() * boltz)
        }
        KramersMode::MultiDim => {
            let ev_min = linalg::sym_eigenvalues(&b1.hess);
            if ev_min[0] <= 0.0 {
                return Err(Error::NotAMinimum(format!(
                    "Hessian at the minimum has eigenvalue {}",
                    ev_min[0]
                )));
            }
            let ev_z = linalg::sym_eigenvalues(&bz.hess);
            let negatives = ev_z.iter().filter(|v| **v < 0.0).count();
            if negatives != 1 {
                return Err(Error::SaddleSignature { eigenvalues: ev_z });
            }
            let mu1 = ev_z[0];
            let det_min: f64 = ev_min.iter().product();
            let det_z: f64 = ev_z.iter().product();
            Ok(2.0 * std::f64::consts::PI / mu1.abs() * (det_z.abs() / det_min).sqrt() * boltz)
        }
    }
}

/// Saddle located on the segment between two 1D minima.
#[derive(Debug, Clone)]
pub struct Saddle1d {
    pub z: f64,
    /// A flat plateau of maximizers was found; the leftmost one is returned.
    pub degenerate: bool,
}

/// Maximize `L` on the segment `[x1, x2]` by a fine uniform scan refined with
/// golden-section search to 1e-10. The interior maximizer is the relevant
/// saddle; a maximum at an endpoint means there is no saddle between.
pub fn saddle_scan_1d(model: &LossModel, x1: f64, x2: f64) -> Result<Saddle1d> {
    if model.dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: model.dim(),
        });
    }
    if x1 == x2 {
        return Err(Error::InvalidArgument("minima must be distinct".into()));
    }
    let (a, b) = if x1 < x2 { (x1, x2) } else { (x2, x1) };
    let n = 4000usize;
    let h = (b - a) / n as f64;
    let mut best_idx = 0usize;
    let mut best = f64::NEG_INFINITY;
    let mut values = vec![0.0; n + 1];
    for i in 0..=n {
        let v = model.value(&[a + i as f64 * h]);
        values[i] = v;
        if v > best + 1e-15 {
            best = v;
            best_idx = i;
        }
    }
    if best_idx == 0 || best_idx == n {
        return Err(Error::SaddleAtEndpoint);
    }
    let degenerate = values
        .iter()
        .enumerate()
        .any(|(i, v)| i != best_idx && (v - best).abs() <= 1e-12 * best.abs().max(1.0));
    // golden-section refinement on the bracketing cells
    let (mut lo, mut hi) = (values_node(a, h, best_idx - 1), values_node(a, h, best_idx + 1));
    let phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - phi * (hi - lo);
    let mut d = lo + phi * (hi - lo);
    let mut fc = model.value(&[c]);
    let mut fd = model.value(&[d]);
    while hi - lo > 1e-10 {
        if fc > fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - phi * (hi - lo);
            fc = model.value(&[c]);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + phi * (hi - lo);
            fd = model.value(&[d]);
        }
    }
    let z = if degenerate {
        // tie-breaking rule: report the leftmost maximizer from the scan
        values_node(a, h, best_idx)
    } else {
        0.5 * (lo + hi)
    };
    Ok(Saddle1d { z, degenerate })
}

fn values_node(a: f64, h: f64, i: usize) -> f64 {
    a + i as f64 * h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::catalog;
    use approx::assert_relative_eq;
    use std::sync::Arc;

    #[test]
    fn lower_bound_direct_substitution() {
        // R0=1, r->0, eps=0.1, sigma=1, d=2 => 25
        let b = met_lower_bound(1.0, 0.0, 0.1, 1.0, 2).unwrap();
        assert_relative_eq!(b, 25.0, epsilon = 1e-12);
        assert_eq!(met_lower_bound(1.0, 1.0, 0.1, 1.0, 2).unwrap(), 0.0);
    }

    #[test]
    fn lower_bound_monotonicity() {
        let base = met_lower_bound(1.0, 0.2, 0.1, 1.0, 2).unwrap();
        assert!(met_lower_bound(1.0, 0.2, 0.2, 1.0, 2).unwrap() < base);
        assert!(met_lower_bound(1.0, 0.2, 0.1, 2.0, 2).unwrap() < base);
        assert!(met_lower_bound(1.0, 0.2, 0.1, 1.0, 3).unwrap() < base);
        assert!(met_lower_bound(1.0, 0.4, 0.1, 1.0, 2).unwrap() < base);
        assert!(met_lower_bound(1.5, 0.2, 0.1, 1.0, 2).unwrap() > base);
    }

    #[test]
    fn upper_bound_vanishes_at_the_rim() {
        assert_eq!(met_upper_bound(1.0, 1.0, 0.5, 1.0, 1.0).unwrap(), 0.0);
        assert!(met_upper_bound(1.0, 0.0, 0.5, 1.0, 1.0).unwrap() > 0.0);
    }

    #[test]
    fn isotropic_field_passes_the_directional_probe() {
        let m = Arc::new(catalog::quadratic_noisy(2, 1.0, 1.0, 1));
        let f = crate::model::DiffusionField::bare(m.clone());
        let dom = ProbeDomain::Ball {
            center: vec![0.0, 0.0],
            radius: 1.0,
        };
        // Q = (sigma/d) I = 0.5 I, quadratic: Lambda = lambda = 1
        let verdict =
            assumption_probe(&m, &f, &dom, &[1.0, 0.0], 0.5, 1.0, 0.5, 256).unwrap();
        assert!(verdict.passed());
        // beta above the top eigenvalue must fail with a witness
        let verdict =
            assumption_probe(&m, &f, &dom, &[1.0, 0.0], 0.75, 1.0, 0.5, 256).unwrap();
        assert!(!verdict.passed());
    }

    #[test]
    fn product_well_on_the_tall_strip_yields_a_witness() {
        // For the product loss on a strip tall in x2 no finite Lambda works:
        // a probe with x2^2 above Lambda violates the drift condition.
        let m = Arc::new(catalog::product_well());
        let f = crate::model::DiffusionField::bare(m.clone());
        let lambda_cap = 2.0;
        let dom = ProbeDomain::Box(
            crate::model::BoxDomain::new(vec![-1.0, -4.0], vec![1.0, 4.0]).unwrap(),
        );
        let verdict =
            assumption_probe(&m, &f, &dom, &[1.0, 0.0], 0.0, lambda_cap, 0.3, 512).unwrap();
        assert!(!verdict.passed(), "expected a witness on the strip");
    }

    #[test]
    fn exp_well_passes_with_the_documented_constants() {
        // On B_R(0), Lambda = e^R / r works once r e^r fits inside the
        // eps^2 beta / 2 slack near the origin.
        let m = Arc::new(catalog::exp_well_noisy(1.0, 2.0));
        let f = crate::model::DiffusionField::bare(m.clone());
        let r_ball = 1.0_f64;
        let r_small = 0.35_f64;
        let (eps, beta) = (1.0, 1.0);
        assert!(r_small * r_small.exp() <= 0.5 * eps * eps * beta);
        let lambda_cap = r_ball.exp() / r_small;
        let dom = ProbeDomain::Ball {
            center: vec![0.0, 0.0],
            radius: r_ball,
        };
        let verdict =
            assumption_probe(&m, &f, &dom, &[1.0, 0.0], beta, lambda_cap, eps, 512).unwrap();
        assert!(verdict.passed());
    }

    #[test]
    fn met_1d_driftless_matches_the_parabola() {
        // L const, q = sigma: u(x) = (R^2 - x^2) / (2 eps^2 sigma)
        let m = catalog::linear_pair_1d(0.0);
        let (eps, sigma, r) = (0.3, 1.3, 1.0);
        let sol = solve_met_1d(&m, &|_| sigma, eps, (-r, r), 1000).unwrap();
        for &x in &[-0.9, -0.5, 0.0, 0.3, 0.77] {
            let want = (r * r - x * x) / (2.0 * eps * eps * sigma);
            let got = sol.eval(x);
            assert!(
                ((got - want) / want).abs() <= 1e-3,
                "u({x}) = {got}, want {want}"
            );
        }
        // interior positivity and zero boundary data
        assert_eq!(sol.values[0], 0.0);
        assert_eq!(*sol.values.last().unwrap(), 0.0);
        assert!(sol.values[1..sol.values.len() - 1].iter().all(|v| *v > 0.0));
        // equals the d=1 lower bound exactly there
        let bound = met_lower_bound(r, 0.5, eps, sigma, 1).unwrap();
        assert_relative_eq!(sol.eval(0.5), bound, max_relative = 1e-3);
    }

    #[test]
    fn met_1d_dominates_the_lower_bound_on_a_quadratic() {
        let m = catalog::quadratic(1, 1.0, None);
        let (eps, sigma, r) = (0.4, 1.0, 1.0);
        let sol = solve_met_1d(&m, &|_| sigma, eps, (-r, r), 800).unwrap();
        for i in 1..sol.nodes.len() - 1 {
            let x = sol.nodes[i];
            let lb = (r * r - x * x) / (2.0 * eps * eps * sigma * 1.0);
            assert!(
                sol.values[i] >= lb - 1e-9,
                "u({x}) = {} below bound {lb}",
                sol.values[i]
            );
        }
    }

    #[test]
    fn met_1d_second_order_convergence_on_the_driftless_case() {
        let m = catalog::linear_pair_1d(0.0);
        let (eps, sigma, r) = (0.5, 1.0, 1.0);
        let exact = |x: f64| (r * r - x * x) / (2.0 * eps * eps * sigma);
        let linf = |n: usize| {
            let sol = solve_met_1d(&m, &|_| sigma, eps, (-r, r), n).unwrap();
            sol.nodes
                .iter()
                .zip(&sol.values)
                .map(|(x, u)| (u - exact(*x)).abs())
                .fold(0.0_f64, f64::max)
        };
        // the scheme is exact on quadratics: both errors at roundoff level
        assert!(linf(100) < 1e-10);
        assert!(linf(200) < 1e-10);
        // with drift the truncation error appears; halve h and compare
        let mq = catalog::quadratic(1, 1.0, None);
        let err = |n: usize| {
            let fine = solve_met_1d(&mq, &|_| sigma, eps, (-r, r), 3200).unwrap();
            let sol = solve_met_1d(&mq, &|_| sigma, eps, (-r, r), n).unwrap();
            sol.nodes
                .iter()
                .zip(&sol.values)
                .map(|(x, u)| (u - fine.eval(*x)).abs())
                .fold(0.0_f64, f64::max)
        };
        let (e1, e2) = (err(100), err(200));
        let ratio = e1 / e2;
        assert!(
            (1.5..=4.5).contains(&ratio),
            "refinement ratio {ratio} out of range ({e1} -> {e2})"
        );
    }

    #[test]
    fn met_1d_rejects_degenerate_diffusion() {
        let m = catalog::quadratic(1, 1.0, None);
        let res = solve_met_1d(&m, &|x| x.max(0.0), 0.1, (-1.0, 1.0), 100);
        assert!(matches!(res, Err(Error::DegenerateDiffusion { .. })));
    }

    #[test]
    fn kramers_1d_hand_value() {
        // L = (x^4/4 - x^2/2) + 1/4 = (x^2-1)^2/4: L''(+-1)=2, L''(0)=-1,
        // dL = 1/4; at eps^2 = 0.05 the prediction is (2pi/sqrt2) e^5.
        let m = catalog::double_well_1d(0.25);
        let eps = 0.05_f64.sqrt();
        let k = kramers_estimate(&m, &[-1.0], &[0.0], eps, KramersMode::OneDim).unwrap();
        let want = 2.0 * std::f64::consts::PI / 2.0_f64.sqrt() * (0.25 / 0.05_f64).exp();
        assert_relative_eq!(k, want, max_relative = 1e-12);
        assert!((k - 659.3).abs() / 659.3 < 1e-3);
    }

    #[test]
    fn kramers_is_symmetric_between_the_wells() {
        let m = catalog::double_well_1d(0.25);
        let eps = 0.3;
        let a = kramers_estimate(&m, &[-1.0], &[0.0], eps, KramersMode::OneDim).unwrap();
        let b = kramers_estimate(&m, &[1.0], &[0.0], eps, KramersMode::OneDim).unwrap();
        assert_relative_eq!(a, b, epsilon = 1e-12);
    }

    #[test]
    fn kramers_exponent_dominates_as_eps_vanishes() {
        let m = catalog::double_well_1d(0.25);
        let dl = 0.25;
        for eps2 in [0.05, 0.02, 0.01] {
            let k = kramers_estimate(&m, &[-1.0], &[0.0], eps2_sqrt(eps2), KramersMode::OneDim)
                .unwrap();
            let rel = (eps2 * k.ln() - dl).abs() / dl;
            assert!(rel < 0.35, "eps2={eps2}: eps^2 log K = {}", eps2 * k.ln());
        }
        // and it converges: smaller eps, smaller gap
        let gap = |e2: f64| {
            let k = kramers_estimate(&m, &[-1.0], &[0.0], e2.sqrt(), KramersMode::OneDim).unwrap();
            (e2 * k.ln() - dl).abs()
        };
        assert!(gap(0.01) < gap(0.05));
    }

    fn eps2_sqrt(e2: f64) -> f64 {
        e2.sqrt()
    }

    #[test]
    fn kramers_multid_reduces_to_1d_on_a_product_landscape() {
        // L(x,y) = s((x^2-1)^2 + y^2): the y-curvature is identical at the
        // saddle and the minimum, so it cancels in the determinant ratio.
        let m2 = catalog::double_well_2d(0.25);
        let eps = 0.35;
        let k2 = kramers_estimate(&m2, &[-1.0, 0.0], &[0.0, 0.0], eps, KramersMode::MultiDim)
            .unwrap();
        let m1 = catalog::double_well_1d(0.25);
        let k1 = kramers_estimate(&m1, &[-1.0], &[0.0], eps, KramersMode::OneDim).unwrap();
        assert_relative_eq!(k2, k1, max_relative = 1e-10);
    }

    #[test]
    fn wrong_saddle_signature_is_rejected() {
        let m = catalog::quadratic(2, 1.0, None);
        let res = kramers_estimate(&m, &[1.0, 0.0], &[0.0, 0.0], 0.3, KramersMode::MultiDim);
        assert!(matches!(res, Err(Error::SaddleSignature { .. })));
    }

    #[test]
    fn saddle_scan_finds_the_barrier_top() {
        let m = catalog::double_well_1d(1.0);
        let s = saddle_scan_1d(&m, -1.0, 1.0).unwrap();
        assert!(s.z.abs() <= 1e-7);
        assert!(!s.degenerate);
    }

    #[test]
    fn monotone_segment_has_no_saddle() {
        let m = catalog::quadratic(1, 1.0, None);
        let res = saddle_scan_1d(&m, 0.5, 2.0);
        assert!(matches!(res, Err(Error::SaddleAtEndpoint)));
    }

    #[test]
    fn flat_plateau_reports_the_leftmost_maximizer() {
        // a barrier with a flat top on [-0.5, 0.5]
        let m = catalog::custom_1d(
            |x| {
                if x.abs() <= 0.5 {
                    1.0
                } else {
                    1.0 - (x.abs() - 0.5) * (x.abs() - 0.5)
                }
            },
            |x| {
                if x.abs() <= 0.5 {
                    0.0
                } else {
                    -2.0 * (x.abs() - 0.5) * x.signum()
                }
            },
            |_| 0.0,
        );
        let s = saddle_scan_1d(&m, -2.0, 2.0).unwrap();
        assert!(s.degenerate);
        assert!((s.z + 0.5).abs() < 2e-3, "leftmost maximizer, got {}", s.z);
    }

    #[test]
    fn radial_polynomial_certifies_with_the_power_law_constant() {
        // On B_R, (v.grad L)(v.x) = |x|^{p-2} x1^2 <= R^{p-2} x1^2.
        let m = Arc::new(catalog::radial_poly(2, 4.0));
        let f = crate::model::DiffusionField::bare(m.clone());
        let r_ball = 1.5_f64;
        let lambda_cap = r_ball.powi(2); // R^{p-2} with p = 4
        let dom = ProbeDomain::Ball {
            center: vec![0.0, 0.0],
            radius: r_ball,
        };
        let ok = assumption_probe(&m, &f, &dom, &[1.0, 0.0], 0.0, lambda_cap, 0.4, 512).unwrap();
        assert!(ok.passed());
        // an undersized constant is caught with a witness
        let bad =
            assumption_probe(&m, &f, &dom, &[1.0, 0.0], 0.0, 0.2 * lambda_cap, 0.0, 512).unwrap();
        assert!(!bad.passed());
    }
}
