//! Loss landscapes and the minibatch-gradient covariance structure.
//!
//! A [`LossModel`] is a mean of `N` partial losses `L(x) = (1/N) sum_i L_i(x)`,
//! each evaluable with value, gradient, and Hessian. The per-step noise of a
//! minibatch step is captured by the covariance
//! `Q(x) = (1/N) sum_i grad L_i ⊗ grad L_i - grad L ⊗ grad L`,
//! a symmetric PSD matrix of rank at most `N - 1`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::ball_probe_set;

/// One partial loss, evaluable with value, gradient, and Hessian.
pub trait SampleLoss: Send + Sync {
    fn value(&self, x: &[f64]) -> f64;
    /// Write the gradient into `out` (length `dim`).
    fn grad(&self, x: &[f64], out: &mut [f64]);
    /// Write the Hessian into `out` (`dim x dim`).
    fn hess(&self, x: &[f64], out: &mut DMatrix<f64>);
}

/// Tag describing how a model was built.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    AnalyticCatalog,
    DatasetQuadratic,
    CustomClosure,
}

/// Dataset-backed total loss with per-sample derivatives.
pub struct LossModel {
    dim: usize,
    samples: Vec<Arc<dyn SampleLoss>>,
    kind: ModelKind,
}

/// Value, gradient, Hessian, and per-sample gradients at one point.
pub struct EvalBundle {
    pub value: f64,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
    pub sample_grads: Vec<DVector<f64>>,
}

impl LossModel {
    pub fn new(dim: usize, samples: Vec<Arc<dyn SampleLoss>>, kind: ModelKind) -> Self {
        assert!(dim >= 1, "dimension must be positive");
        assert!(!samples.is_empty(), "a model needs at least one sample");
        Self { dim, samples, kind }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_samples(&self) -> usize {
        self.samples.len()
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    /// Total loss `L(x)`, the arithmetic mean of the partial losses.
    pub fn value(&self, x: &[f64]) -> f64 {
        let n = self.samples.len() as f64;
        self.samples.iter().map(|s| s.value(x)).sum::<f64>() / n
    }

    /// Partial loss `L_i(x)`.
    pub fn sample_value(&self, i: usize, x: &[f64]) -> f64 {
        self.samples[i].value(x)
    }

    /// Gradient of the partial loss `L_i`, written into `out`.
    pub fn sample_grad(&self, i: usize, x: &[f64], out: &mut [f64]) {
        self.samples[i].grad(x, out);
    }

    /// Total gradient, written into `out`; `scratch` must have length `dim`.
    pub fn grad(&self, x: &[f64], out: &mut [f64], scratch: &mut [f64]) {
        out.fill(0.0);
        for s in &self.samples {
            s.grad(x, scratch);
            for (o, g) in out.iter_mut().zip(scratch.iter()) {
                *o += g;
            }
        }
        let inv_n = 1.0 / self.samples.len() as f64;
        for o in out.iter_mut() {
            *o *= inv_n;
        }
    }

    /// Total gradient as a fresh vector.
    pub fn grad_vec(&self, x: &[f64]) -> DVector<f64> {
        let mut out = vec![0.0; self.dim];
        let mut scratch = vec![0.0; self.dim];
        self.grad(x, &mut out, &mut scratch);
        DVector::from_vec(out)
    }

    /// Total Hessian `D^2 L(x)`.
    pub fn hess(&self, x: &[f64]) -> DMatrix<f64> {
        let mut acc = DMatrix::zeros(self.dim, self.dim);
        let mut tmp = DMatrix::zeros(self.dim, self.dim);
        for s in &self.samples {
            s.hess(x, &mut tmp);
            acc += &tmp;
        }
        acc / self.samples.len() as f64
    }

    /// Value, gradient, Hessian, and all per-sample gradients at `x`.
    ///
    /// Non-finite output is reported with the offending sample index.
    pub fn evaluate(&self, x: &[f64]) -> Result<EvalBundle> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                what: "query point",
                x: x.to_vec(),
                sample: None,
            });
        }
        let n = self.samples.len();
        let mut sample_grads = Vec::with_capacity(n);
        let mut value = 0.0;
        let mut grad = DVector::zeros(self.dim);
        let mut gbuf = vec![0.0; self.dim];
        for (i, s) in self.samples.iter().enumerate() {
            let v = s.value(x);
            s.grad(x, &mut gbuf);
            if !v.is_finite() || !gbuf.iter().all(|g| g.is_finite()) {
                return Err(Error::NonFinite {
                    what: "partial loss",
                    x: x.to_vec(),
                    sample: Some(i),
                });
            }
            value += v;
            let g = DVector::from_column_slice(&gbuf);
            grad += &g;
            sample_grads.push(g);
        }
        value /= n as f64;
        grad /= n as f64;
        let hess = self.hess(x);
        if !hess.iter().all(|h| h.is_finite()) {
            return Err(Error::NonFinite {
                what: "Hessian",
                x: x.to_vec(),
                sample: None,
            });
        }
        Ok(EvalBundle {
            value,
            grad,
            hess,
            sample_grads,
        })
    }
}

/// Learning-rate bookkeeping. The effective learning rate is always derived:
/// `eps^2 = eta / (2 * batch_size)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparams {
    pub eta: f64,
    pub batch_size: usize,
}

impl Hyperparams {
    pub fn new(eta: f64, batch_size: usize) -> Result<Self> {
        if !(eta > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be positive, got {eta}"
            )));
        }
        if batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be positive".into()));
        }
        Ok(Self { eta, batch_size })
    }

    pub fn eps2(&self) -> f64 {
        self.eta / (2.0 * self.batch_size as f64)
    }

    pub fn eps(&self) -> f64 {
        self.eps2().sqrt()
    }
}

/// The diffusion structure `Q(x)` of a model, with optional `Q_delta`
/// regularization `Q_delta(x) = Q(x)/batch + delta * I`.
pub struct DiffusionField {
    model: Arc<LossModel>,
    delta: f64,
    batch_size: usize,
    psd_tol_rel: f64,
}

impl DiffusionField {
    pub fn new(model: Arc<LossModel>, delta: f64, batch_size: usize) -> Result<Self> {
        if delta < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "regularizer delta must be nonnegative, got {delta}"
            )));
        }
        if batch_size == 0 || batch_size > model.n_samples() {
            return Err(Error::InvalidArgument(format!(
                "batch size {} outside 1..={}",
                batch_size,
                model.n_samples()
            )));
        }
        Ok(Self {
            model,
            delta,
            batch_size,
            psd_tol_rel: 1e-10,
        })
    }

    /// Unregularized field (`delta = 0`, batch 1).
    pub fn bare(model: Arc<LossModel>) -> Self {
        Self {
            model,
            delta: 0.0,
            batch_size: 1,
            psd_tol_rel: 1e-10,
        }
    }

    pub fn model(&self) -> &Arc<LossModel> {
        &self.model
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    /// Absolute eigenvalue clamp threshold for a given `Q`: relative to its
    /// trace, since the covariance of outer products scales with it.
    pub fn psd_tol(&self, q: &DMatrix<f64>) -> f64 {
        self.psd_tol_rel * q.trace().abs() + 1e-30
    }

    /// Raw symmetrized covariance (no eigenvalue clamping), written into `out`.
    ///
    /// `gbuf`/`mbuf` are `dim`-length scratch slices.
    pub fn covariance_into(
        &self,
        x: &[f64],
        out: &mut DMatrix<f64>,
        gbuf: &mut [f64],
        mbuf: &mut [f64],
    ) {
        let d = self.model.dim();
        let n = self.model.n_samples();
        out.fill(0.0);
        mbuf.fill(0.0);
        for s in &self.model.samples {
            s.grad(x, gbuf);
            for i in 0..d {
                mbuf[i] += gbuf[i];
                for j in i..d {
                    out[(i, j)] += gbuf[i] * gbuf[j];
                }
            }
        }
        let inv_n = 1.0 / n as f64;
        for m in mbuf.iter_mut() {
            *m *= inv_n;
        }
        for i in 0..d {
            for j in i..d {
                let v = out[(i, j)] * inv_n - mbuf[i] * mbuf[j];
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
    }

    /// The covariance `Q(x)`, symmetrized and with eigenvalues below the clamp
    /// threshold set to zero.
    pub fn covariance_matrix(&self, x: &[f64]) -> DMatrix<f64> {
        let d = self.model.dim();
        let mut q = DMatrix::zeros(d, d);
        let mut g = vec![0.0; d];
        let mut m = vec![0.0; d];
        self.covariance_into(x, &mut q, &mut g, &mut m);
        linalg::clamp_psd(&q, self.psd_tol(&q))
    }

    /// `Q_delta(x) = Q(x)/batch + delta * I`, strictly positive definite when
    /// `delta > 0`.
    pub fn regularize(&self, x: &[f64], delta: f64) -> Result<DMatrix<f64>> {
        if delta < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "delta must be nonnegative, got {delta}"
            )));
        }
        let mut q = self.covariance_matrix(x) / self.batch_size as f64;
        for i in 0..q.nrows() {
            q[(i, i)] += delta;
        }
        Ok(q)
    }

    /// The matrix that actually drives the noise term: `Q(x)` when
    /// `delta == 0`, else `Q_delta(x)`. Written into `out` without clamping
    /// (the PSD square root downstream clamps).
    pub fn noise_matrix_into(
        &self,
        x: &[f64],
        out: &mut DMatrix<f64>,
        gbuf: &mut [f64],
        mbuf: &mut [f64],
    ) {
        self.covariance_into(x, out, gbuf, mbuf);
        if self.delta > 0.0 {
            let inv_b = 1.0 / self.batch_size as f64;
            *out *= inv_b;
            for i in 0..out.nrows() {
                out[(i, i)] += self.delta;
            }
        }
    }
}

/// Symmetric PSD square root `S` with `S S^T = Q`; see the module docs of
/// [`crate::linalg`] for the clamp convention.
pub fn matrix_sqrt_psd(q: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    linalg::sym_sqrt_psd(q, tol)
}

/// Probe-based estimate of the convexity rate on `B_radius(center)`:
/// the minimum over a deterministic low-discrepancy probe set of the smallest
/// Hessian eigenvalue. An estimate, not a certificate.
pub fn lambda_convexity(
    model: &LossModel,
    center: &[f64],
    radius: f64,
    n_probes: usize,
) -> Result<f64> {
    if !(radius > 0.0) {
        return Err(Error::InvalidArgument("radius must be positive".into()));
    }
    let probes = ball_probe_set(center, radius, n_probes.max(1));
    let mut lambda = f64::INFINITY;
    for p in &probes {
        let h = model.hess(p);
        if !h.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                what: "Hessian",
                x: p.clone(),
                sample: None,
            });
        }
        lambda = lambda.min(linalg::sym_min_eigenvalue(&h));
    }
    Ok(lambda)
}

/// Axis-aligned box domain.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxDomain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.iter().zip(&hi).any(|(a, b)| a >= b) {
            return Err(Error::InvalidArgument("box bounds must satisfy lo < hi".into()));
        }
        Ok(Self { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (a, b))| *v >= *a && *v <= *b)
    }

    pub fn diameter(&self) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| (b - a) * (b - a))
            .sum::<f64>()
            .sqrt()
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for (v, (a, b)) in x.iter_mut().zip(self.lo.iter().zip(&self.hi)) {
            *v = v.clamp(*a, *b);
        }
    }
}

/// A local minimum located by multi-start descent.
#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub hess: DMatrix<f64>,
}

/// Deterministic multi-start gradient descent over a box.
///
/// Returns the deduplicated minima; starts that stall on the boundary or
/// exhaust the iteration budget are dropped. Errors only when no start
/// converges to an interior critical point.
pub fn locate_minima(model: &LossModel, domain: &BoxDomain, n_starts: usize) -> Result<Vec<Minimum>> {
    let d = model.dim();
    if domain.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: domain.dim(),
        });
    }
    let grad_tol = 1e-8;
    let psd_tol = 1e-8;
    let merge_tol = 1e-4 * domain.diameter();
    let max_iters = 20_000;

    let starts = crate::rng::box_probe_set(&domain.lo, &domain.hi, n_starts.max(1));
    let mut found: Vec<Minimum> = Vec::new();
    let mut boundary_stalls = 0usize;
    let mut budget_exhausted = 0usize;

    let mut g = vec![0.0; d];
    let mut scratch = vec![0.0; d];
    for start in starts {
        let mut x = start;
        let mut converged = false;
        let mut on_boundary = false;
        let mut fx = model.value(&x);
        for _ in 0..max_iters {
            model.grad(&x, &mut g, &mut scratch);
            let gn = linalg::norm(&g);
            if gn <= grad_tol {
                converged = true;
                break;
            }
            // Backtracking line search with projection onto the box.
            let mut step = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                let mut cand: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - step * gi).collect();
                domain.clamp(&mut cand);
                let fc = model.value(&cand);
                if fc.is_finite() && fc <= fx - 1e-4 * step * gn * gn {
                    let moved: f64 = cand
                        .iter()
                        .zip(&x)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt();
                    x = cand;
                    fx = fc;
                    accepted = true;
                    if moved < 1e-15 {
                        on_boundary = true;
                    }
                    break;
                }
                step *= 0.5;
            }
            if !accepted || on_boundary {
                on_boundary = true;
                break;
            }
        }
        if on_boundary {
            boundary_stalls += 1;
            continue;
        }
        if !converged {
            budget_exhausted += 1;
            continue;
        }
        // Interior check: descent pinned to a face is a boundary stall.
        let interior = x
            .iter()
            .zip(domain.lo.iter().zip(&domain.hi))
            .all(|(v, (a, b))| *v > *a + 1e-12 && *v < *b - 1e-12);
        if !interior {
            boundary_stalls += 1;
            continue;
        }
        let h = model.hess(&x);
        if linalg::sym_min_eigenvalue(&h) < -psd_tol {
            continue; // saddle or maximum
        }
        let duplicate = found
            .iter()
            .any(|m| m.x.iter().zip(&x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() <= merge_tol);
        if !duplicate {
            found.push(Minimum {
                value: model.value(&x),
                hess: h,
                x,
            });
        }
    }
    if found.is_empty() {
        return Err(Error::NoMinimumFound(format!(
            "{boundary_stalls} starts stalled on the boundary, {budget_exhausted} exhausted the budget"
        )));
    }
    found.sort_by(|a, b| a.x.partial_cmp(&b.x).unwrap());
    Ok(found)
}

pub mod catalog;
