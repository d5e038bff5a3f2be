//! Analytic model catalog.
//!
//! Every entry is built from closed-form partial losses, so gradients and
//! Hessians are exact. Noisy variants realize a prescribed constant gradient
//! covariance through sample shifts or tilts: shifting a quadratic by `c_i`
//! or tilting any base loss by `±t·x` leaves the mean loss (up to an additive
//! constant), the gradient, and the Hessian unchanged while setting
//! `Q = cov` of the per-sample gradients exactly.

use std::sync::Arc;

use nalgebra::DMatrix;

use super::{LossModel, ModelKind, SampleLoss};

/// `L_i(x) = (lambda/2) |x - center|^2`.
struct ShiftedQuadratic {
    lambda: f64,
    center: Vec<f64>,
}

impl SampleLoss for ShiftedQuadratic {
    fn value(&self, x: &[f64]) -> f64 {
        0.5 * self.lambda
            * x.iter()
                .zip(&self.center)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
    }
    fn grad(&self, x: &[f64], out: &mut [f64]) {
        for ((o, a), b) in out.iter_mut().zip(x).zip(&self.center) {
            *o = self.lambda * (a - b);
        }
    }
    fn hess(&self, _x: &[f64], out: &mut DMatrix<f64>) {
        out.fill(0.0);
        for i in 0..out.nrows() {
            out[(i, i)] = self.lambda;
        }
    }
}

/// `L(x) = (1/2) x^T diag(cs) x`.
struct DiagQuadratic {
    cs: Vec<f64>,
}

impl SampleLoss for DiagQuadratic {
    fn value(&self, x: &[f64]) -> f64 {
        0.5 * x.iter().zip(&self.cs).map(|(a, c)| c * a * a).sum::<f64>()
    }
    fn grad(&self, x: &[f64], out: &mut [f64]) {
        for ((o, a), c) in out.iter_mut().zip(x).zip(&self.cs) {
            *o = c * a;
        }
    }
    fn hess(&self, _x: &[f64], out: &mut DMatrix<f64>) {
        out.fill(0.0);
        for (i, c) in self.cs.iter().enumerate() {
            out[(i, i)] = *c;
        }
    }
}

/// `L(x) = (1/p) |x|^p`, p >= 2.
struct RadialPoly {
    p: f64,
}

impl SampleLoss for RadialPoly {
    fn value(&self, x: &[f64]) -> f64 {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        r2.powf(0.5 * self.p) / self.p
    }
    fn grad(&self, x: &[f64], out: &mut [f64]) {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        if r2 == 0.0 {
            out.fill(0.0);
            return;
        }
        let f = r2.powf(0.5 * self.p - 1.0);
        for (o, v) in out.iter_mut().zip(x) {
            *o = f * v;
        }
    }
    fn hess(&self, x: &[f64], out: &mut DMatrix<f64>) {
        let d = out.nrows();
        let r2: f64 = x.iter().map(|v| v * v).sum();
        out.fill(0.0);
        if r2 == 0.0 {
            if (self.p - 2.0).abs() < 1e-14 {
                for i in 0..d {
                    out[(i, i)] = 1.0;
                }
            }
            return;
        }
        let f = r2.powf(0.5 * self.p - 1.0);
        let g = (self.p - 2.0) * r2.powf(0.5 * self.p - 2.0);
        for i in 0..d {
            out[(i, i)] = f;
            for j in 0..d {
                out[(i, j)] += g * x[i] * x[j];
            }
        }
    }
}

/// `L(x1, x2) = e^{x1} + x2^2 / 2`.
struct ExpWell;

impl SampleLoss for ExpWell {
    fn value(&self, x: &[f64]) -> f64 {
        x[0].exp() + 0.5 * x[1] * x[1]
    }
    fn grad(&self, x: &[f64], out: &mut [f64]) {
        out[0] = x[0].exp();
        out[1] = x[1];
    }
    fn hess(&self, x: &[f64], out: &mut DMatrix<f64>) {
        out.fill(0.0);
        out[(0, 0)] = x[0].exp();
        out[(1, 1)] = 1.0;
    }
}

/// `L(x1, x2) = x1^2 x2^2 / 2`.
struct ProductWell;

impl SampleLoss for ProductWell {
    fn value(&self, x: &[f64]) -> f64 {
        0.5 * x[0] * x[0] * x[1] * x[1]
    }
    fn grad(&self, x: &[f64], out: &mut [f64]) {
        out[0] = x[0] * x[1] * x[1];
        out[1] = x[0] * x[0] * x[1];
    }
    fn hess(&self, x: &[f64], out: &mut DMatrix<f64>) {
        out[(0, 0)] = x[1] * x[1];
        out[(1, 1)] = x[0] * x[0];
        out[(0, 1)] = 2.0 * x[0] * x[1];
        out[(1, 0)] = 2.0 * x[0] * x[1];
    }
}

/// `L(x) = scale * (x^2 - 1)^2`.
struct DoubleWell1d {
    scale: f64,
}

impl SampleLoss for DoubleWell1d {
    fn value(&self, x: &[f64]) -> f64 {
        let w = x[0] * x[0] - 1.0;
        self.scale * w * w
    }
    fn grad(&self, x: &[f64], out: &mut [f64]) {
        out[0] = 4.0 * self.scale * x[0] * (x[0] * x[0] - 1.0);
    }
    fn hess(&self, x: &[f64], out: &mut DMatrix<f64>) {
        out[(0, 0)] = self.scale * (12.0 * x[0] * x[0] - 4.0);
    }
}

/// `L(x, y) = scale * ((x^2 - 1)^2 + y^2)`.
struct DoubleWell2d {
    scale: f64,
}

impl SampleLoss for DoubleWell2d {
    fn value(&self, x: &[f64]) -> f64 {
        let w = x[0] * x[0] - 1.0;
        self.scale * (w * w + x[1] * x[1])
    }
    fn grad(&self, x: &[f64], out: &mut [f64]) {
        out[0] = 4.0 * self.scale * x[0] * (x[0] * x[0] - 1.0);
        out[1] = 2.0 * self.scale * x[1];
    }
    fn hess(&self, x: &[f64], out: &mut DMatrix<f64>) {
        out.fill(0.0);
        out[(0, 0)] = self.scale * (12.0 * x[0] * x[0] - 4.0);
        out[(1, 1)] = 2.0 * self.scale;
    }
}

/// `L_i(x) = base(x) + tilt . x + offset`; the tilt shifts the per-sample
/// gradient without touching the Hessian.
struct TiltedSample {
    base: Arc<dyn SampleLoss>,
    tilt: Vec<f64>,
    offset: f64,
}

impl SampleLoss for TiltedSample {
    fn value(&self, x: &[f64]) -> f64 {
        self.base.value(x) + crate::linalg::dot(&self.tilt, x) + self.offset
    }
    fn grad(&self, x: &[f64], out: &mut [f64]) {
        self.base.grad(x, out);
        for (o, t) in out.iter_mut().zip(&self.tilt) {
            *o += t;
        }
    }
    fn hess(&self, x: &[f64], out: &mut DMatrix<f64>) {
        self.base.hess(x, out);
    }
}

/// `L_i(theta) = (a^T theta - y)^2 / 2` for one data row.
struct DatasetSample {
    a: Vec<f64>,
    y: f64,
}

impl SampleLoss for DatasetSample {
    fn value(&self, x: &[f64]) -> f64 {
        let r = crate::linalg::dot(&self.a, x) - self.y;
        0.5 * r * r
    }
    fn grad(&self, x: &[f64], out: &mut [f64]) {
        let r = crate::linalg::dot(&self.a, x) - self.y;
        for (o, ai) in out.iter_mut().zip(&self.a) {
            *o = r * ai;
        }
    }
    fn hess(&self, _x: &[f64], out: &mut DMatrix<f64>) {
        let d = out.nrows();
        for i in 0..d {
            for j in 0..d {
                out[(i, j)] = self.a[i] * self.a[j];
            }
        }
    }
}

/// 1D closures supplying their own derivatives.
struct Closure1d {
    f: fn(f64) -> f64,
    g: fn(f64) -> f64,
    h: fn(f64) -> f64,
}

impl SampleLoss for Closure1d {
    fn value(&self, x: &[f64]) -> f64 {
        (self.f)(x[0])
    }
    fn grad(&self, x: &[f64], out: &mut [f64]) {
        out[0] = (self.g)(x[0]);
    }
    fn hess(&self, x: &[f64], out: &mut DMatrix<f64>) {
        out[(0, 0)] = (self.h)(x[0]);
    }
}

/// Isotropic quadratic `(lambda/2)|x - x0|^2` with a single sample (`Q = 0`).
pub fn quadratic(dim: usize, lambda: f64, x0: Option<Vec<f64>>) -> LossModel {
    let center = x0.unwrap_or_else(|| vec![0.0; dim]);
    assert_eq!(center.len(), dim);
    LossModel::new(
        dim,
        vec![Arc::new(ShiftedQuadratic { lambda, center })],
        ModelKind::AnalyticCatalog,
    )
}

/// Isotropic quadratic with sample shifts calibrated so `Q = (sigma/dim) I`
/// exactly at every point (`sigma = 0` degenerates to identical samples).
///
/// Samples are `pairs` copies of `(lambda/2)|x - (+-a) e_j|^2` per axis with
/// `a = sqrt(sigma)/lambda`.
pub fn quadratic_noisy(dim: usize, lambda: f64, sigma: f64, pairs: usize) -> LossModel {
    assert!(pairs >= 1);
    let a = sigma.sqrt() / lambda;
    let mut samples: Vec<Arc<dyn SampleLoss>> = Vec::new();
    for _ in 0..pairs {
        for j in 0..dim {
            for sign in [1.0, -1.0] {
                let mut center = vec![0.0; dim];
                center[j] = sign * a;
                samples.push(Arc::new(ShiftedQuadratic { lambda, center }));
            }
        }
    }
    LossModel::new(dim, samples, ModelKind::AnalyticCatalog)
}

/// Isotropic quadratic whose two samples are shifted along the first axis
/// only, so `Q = diag(sigma, 0, ..., 0)` exactly.
pub fn quadratic_degenerate(dim: usize, lambda: f64, sigma: f64) -> LossModel {
    let a = sigma.sqrt() / lambda;
    let mut c1 = vec![0.0; dim];
    c1[0] = a;
    let mut c2 = vec![0.0; dim];
    c2[0] = -a;
    LossModel::new(
        dim,
        vec![
            Arc::new(ShiftedQuadratic { lambda, center: c1 }),
            Arc::new(ShiftedQuadratic { lambda, center: c2 }),
        ],
        ModelKind::AnalyticCatalog,
    )
}

/// Anisotropic quadratic `(1/2) x^T diag(cs) x` with a single sample.
pub fn quadratic_aniso(cs: Vec<f64>) -> LossModel {
    let dim = cs.len();
    LossModel::new(dim, vec![Arc::new(DiagQuadratic { cs })], ModelKind::AnalyticCatalog)
}

/// Anisotropic quadratic with `2 dim` tilted samples giving the constant
/// isotropic covariance `Q = (sigma/dim) I` next to the anisotropic drift.
/// The offset keeps every partial loss nonnegative on `|x| <= domain_radius`.
pub fn quadratic_aniso_noisy(cs: Vec<f64>, sigma: f64, domain_radius: f64) -> LossModel {
    let dim = cs.len();
    let t = sigma.sqrt();
    let cmin = cs.iter().cloned().fold(f64::INFINITY, f64::min);
    // (c_min/2)|x|^2 - t|x| >= -t^2/(2 c_min); shift by the worst case within
    // the configured radius.
    let offset = (t * domain_radius).max(t * t / (2.0 * cmin.max(1e-300)));
    let base = Arc::new(DiagQuadratic { cs });
    let mut samples: Vec<Arc<dyn SampleLoss>> = Vec::new();
    for j in 0..dim {
        for sign in [1.0, -1.0] {
            let mut tilt = vec![0.0; dim];
            tilt[j] = sign * t;
            samples.push(Arc::new(TiltedSample {
                base: base.clone(),
                tilt,
                offset,
            }));
        }
    }
    LossModel::new(dim, samples, ModelKind::AnalyticCatalog)
}

/// Radial polynomial `(1/p)|x|^p`, `p >= 2`.
pub fn radial_poly(dim: usize, p: f64) -> LossModel {
    assert!(p >= 2.0, "radial polynomial needs p >= 2");
    LossModel::new(dim, vec![Arc::new(RadialPoly { p })], ModelKind::AnalyticCatalog)
}

/// Exponential well `e^{x1} + x2^2/2` in 2D.
pub fn exp_well() -> LossModel {
    LossModel::new(2, vec![Arc::new(ExpWell)], ModelKind::AnalyticCatalog)
}

/// Product well `x1^2 x2^2 / 2` in 2D.
pub fn product_well() -> LossModel {
    LossModel::new(2, vec![Arc::new(ProductWell)], ModelKind::AnalyticCatalog)
}

/// 1D double well `scale * (x^2 - 1)^2`.
pub fn double_well_1d(scale: f64) -> LossModel {
    LossModel::new(
        1,
        vec![Arc::new(DoubleWell1d { scale })],
        ModelKind::AnalyticCatalog,
    )
}

/// 1D double well with two tilted samples giving constant `Q = sigma`.
///
/// Tilts are `-+ sqrt(sigma) x` plus the offset `sqrt(sigma) * domain_radius`,
/// which keeps both partial losses nonnegative on `|x| <= domain_radius`.
pub fn double_well_1d_noisy(scale: f64, sigma: f64, domain_radius: f64) -> LossModel {
    let t = sigma.sqrt();
    let base = Arc::new(DoubleWell1d { scale });
    LossModel::new(
        1,
        vec![
            Arc::new(TiltedSample {
                base: base.clone(),
                tilt: vec![-t],
                offset: t * domain_radius,
            }),
            Arc::new(TiltedSample {
                base,
                tilt: vec![t],
                offset: t * domain_radius,
            }),
        ],
        ModelKind::AnalyticCatalog,
    )
}

/// Exponential well with two samples tilted along the first axis, giving
/// `Q = diag(sigma, 0)`. The offset keeps both partial losses nonnegative on
/// `|x1| <= domain_radius` (where `e^{x} + x + R >= 0`).
pub fn exp_well_noisy(sigma: f64, domain_radius: f64) -> LossModel {
    let t = sigma.sqrt();
    let offset = t * domain_radius;
    LossModel::new(
        2,
        vec![
            Arc::new(TiltedSample {
                base: Arc::new(ExpWell),
                tilt: vec![t, 0.0],
                offset,
            }),
            Arc::new(TiltedSample {
                base: Arc::new(ExpWell),
                tilt: vec![-t, 0.0],
                offset,
            }),
        ],
        ModelKind::AnalyticCatalog,
    )
}

/// 2D double well `scale * ((x^2-1)^2 + y^2)`.
pub fn double_well_2d(scale: f64) -> LossModel {
    LossModel::new(
        2,
        vec![Arc::new(DoubleWell2d { scale })],
        ModelKind::AnalyticCatalog,
    )
}

/// Two affine samples `+-(slope x) + offset` whose gradients are `+-slope`;
/// the mean loss is constant with `Q = slope^2`.
pub fn linear_pair_1d(slope: f64) -> LossModel {
    let offset = 100.0 * slope.abs().max(1.0);
    LossModel::new(
        1,
        vec![
            Arc::new(TiltedSample {
                base: Arc::new(Closure1d {
                    f: |_| 0.0,
                    g: |_| 0.0,
                    h: |_| 0.0,
                }),
                tilt: vec![slope],
                offset,
            }),
            Arc::new(TiltedSample {
                base: Arc::new(Closure1d {
                    f: |_| 0.0,
                    g: |_| 0.0,
                    h: |_| 0.0,
                }),
                tilt: vec![-slope],
                offset,
            }),
        ],
        ModelKind::AnalyticCatalog,
    )
}

/// 1D model from user closures (value, first, second derivative).
pub fn custom_1d(f: fn(f64) -> f64, g: fn(f64) -> f64, h: fn(f64) -> f64) -> LossModel {
    LossModel::new(1, vec![Arc::new(Closure1d { f, g, h })], ModelKind::CustomClosure)
}

/// Least-squares dataset model: one sample `(a^T theta - y)^2 / 2` per row.
pub fn dataset_quadratic(rows: Vec<(Vec<f64>, f64)>) -> crate::error::Result<LossModel> {
    if rows.is_empty() {
        return Err(crate::error::Error::InvalidArgument(
            "dataset must have at least one row".into(),
        ));
    }
    let dim = rows[0].0.len();
    if dim == 0 {
        return Err(crate::error::Error::InvalidArgument(
            "dataset rows must have at least one feature".into(),
        ));
    }
    let mut samples: Vec<Arc<dyn SampleLoss>> = Vec::with_capacity(rows.len());
    for (a, y) in rows {
        if a.len() != dim {
            return Err(crate::error::Error::DimensionMismatch {
                expected: dim,
                got: a.len(),
            });
        }
        samples.push(Arc::new(DatasetSample { a, y }));
    }
    Ok(LossModel::new(dim, samples, ModelKind::DatasetQuadratic))
}
