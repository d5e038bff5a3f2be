//! Grid solver for the degenerate Fokker-Planck equation
//! `rho_t = div( eps^2 div(Q rho) + rho grad L )`,
//! closed forms for the constant-coefficient cases, and the Lyapunov-equation
//! steady-state machinery.
//!
//! The grid solver covers d in {1, 2} with diagonal `Q` on the grid region;
//! per axis it uses conservative exponentially-fitted (Chang-Cooper) fluxes
//! `G = D (rho_{i+1}-rho_i)/h + A (w_l rho_i + w_r rho_{i+1})`
//! with `D = eps^2 q`, `A = dL/dx + eps^2 dq/dx`, which is exact on local
//! equilibria and degenerates to upwind transport as `q -> 0`. Boundaries are
//! zero-flux, so mass is conserved to roundoff on the truncated box.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{DiffusionField, LossModel};

/// One uniform grid axis: cell centers `min + (i + 1/2) h`, `i < n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub min: f64,
    pub h: f64,
    pub n: usize,
}

impl Axis {
    pub fn center(&self, i: usize) -> f64 {
        self.min + (i as f64 + 0.5) * self.h
    }

    pub fn max(&self) -> f64 {
        self.min + self.h * self.n as f64
    }
}

/// Rectangular grid request: box bounds plus cells per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub cells: Vec<usize>,
}

impl GridSpec {
    pub fn new_1d(lo: f64, hi: f64, cells: usize) -> Self {
        Self {
            lo: vec![lo],
            hi: vec![hi],
            cells: vec![cells],
        }
    }

    pub fn new_2d(lo: [f64; 2], hi: [f64; 2], cells: [usize; 2]) -> Self {
        Self {
            lo: lo.to_vec(),
            hi: hi.to_vec(),
            cells: cells.to_vec(),
        }
    }

    fn axes(&self) -> Result<Vec<Axis>> {
        if self.lo.len() != self.hi.len() || self.lo.len() != self.cells.len() {
            return Err(Error::InvalidArgument("grid spec fields must share a length".into()));
        }
        if self.lo.is_empty() || self.lo.len() > 2 {
            return Err(Error::InvalidArgument("grid solver covers 1 or 2 dimensions".into()));
        }
        let mut axes = Vec::new();
        for k in 0..self.lo.len() {
            if self.cells[k] < 4 {
                return Err(Error::InvalidArgument("need at least 4 cells per axis".into()));
            }
            if self.lo[k] >= self.hi[k] {
                return Err(Error::InvalidArgument("grid bounds must satisfy lo < hi".into()));
            }
            axes.push(Axis {
                min: self.lo[k],
                h: (self.hi[k] - self.lo[k]) / self.cells[k] as f64,
                n: self.cells[k],
            });
        }
        Ok(axes)
    }
}

/// Discretized probability density on a rectangular grid.
#[derive(Debug, Clone)]
pub struct GridDensity {
    pub axes: Vec<Axis>,
    /// Row-major cell values: 1D `values[i]`, 2D `values[i * n1 + j]`.
    pub values: Vec<f64>,
    pub time: f64,
    /// Running total of mass removed by positivity clipping.
    pub clipped_mass: f64,
}

impl GridDensity {
    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().map(|a| a.h).product()
    }

    pub fn n_cells(&self) -> usize {
        self.axes.iter().map(|a| a.n).product()
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.cell_volume()
    }

    /// Coordinates of the center of flat cell `idx`.
    pub fn cell_center(&self, idx: usize) -> Vec<f64> {
        match self.axes.len() {
            1 => vec![self.axes[0].center(idx)],
            2 => {
                let n1 = self.axes[1].n;
                vec![self.axes[0].center(idx / n1), self.axes[1].center(idx % n1)]
            }
            _ => unreachable!(),
        }
    }

    /// Mass carried by cells touching the boundary of the box.
    pub fn boundary_mass(&self) -> f64 {
        let vol = self.cell_volume();
        match self.axes.len() {
            1 => {
                let n = self.axes[0].n;
                (self.values[0] + self.values[n - 1]) * vol
            }
            2 => {
                let (n0, n1) = (self.axes[0].n, self.axes[1].n);
                let mut m = 0.0;
                for i in 0..n0 {
                    for j in 0..n1 {
                        if i == 0 || i == n0 - 1 || j == 0 || j == n1 - 1 {
                            m += self.values[i * n1 + j];
                        }
                    }
                }
                m * vol
            }
            _ => unreachable!(),
        }
    }

    pub fn normalize(&mut self) {
        let m = self.mass();
        if m > 0.0 {
            for v in &mut self.values {
                *v /= m;
            }
        }
    }

    /// `integral |x - center|^2 rho`.
    pub fn second_moment(&self, center: &[f64]) -> f64 {
        let vol = self.cell_volume();
        let mut acc = 0.0;
        for (idx, v) in self.values.iter().enumerate() {
            let x = self.cell_center(idx);
            let r2: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
            acc += r2 * v;
        }
        acc * vol
    }

    /// Mass outside the ball `B_radius(center)`.
    pub fn mass_outside_ball(&self, center: &[f64], radius: f64) -> f64 {
        let vol = self.cell_volume();
        let mut acc = 0.0;
        for (idx, v) in self.values.iter().enumerate() {
            let x = self.cell_center(idx);
            let r2: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
            if r2 > radius * radius {
                acc += v;
            }
        }
        acc * vol
    }

    /// `integral |a - b| dx` between two densities on the same grid.
    pub fn l1_distance(&self, other: &GridDensity) -> Result<f64> {
        if self.axes != other.axes {
            return Err(Error::InvalidArgument("grids do not match".into()));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            * self.cell_volume())
    }
}

/// Initial datum for [`init_grid`].
pub enum InitialDensity<'a> {
    /// Uniform on the box; its support is the box by construction, so the
    /// boundary-mass guard does not apply.
    Uniform,
    /// Axis-aligned Gaussian.
    Gaussian { mean: Vec<f64>, std: Vec<f64> },
    Closure(&'a dyn Fn(&[f64]) -> f64),
}

const BOUNDARY_MASS_THRESHOLD: f64 = 1e-8;

/// Sample an initial density at the cell centers and normalize to unit mass.
///
/// Rejects data whose boundary cells carry mass (box too small) and data
/// narrower than a few cells (unresolvable).
pub fn init_grid(spec: &GridSpec, rho0: &InitialDensity) -> Result<GridDensity> {
    let axes = spec.axes()?;
    let mut grid = GridDensity {
        axes,
        values: Vec::new(),
        time: 0.0,
        clipped_mass: 0.0,
    };
    let n_total: usize = grid.axes.iter().map(|a| a.n).product();
    grid.values = vec![0.0; n_total];
    for idx in 0..n_total {
        let x = {
            // cell_center needs values sized; compute inline
            match grid.axes.len() {
                1 => vec![grid.axes[0].center(idx)],
                2 => {
                    let n1 = grid.axes[1].n;
                    vec![grid.axes[0].center(idx / n1), grid.axes[1].center(idx % n1)]
                }
                _ => unreachable!(),
            }
        };
        let v = match rho0 {
            InitialDensity::Uniform => 1.0,
            InitialDensity::Gaussian { mean, std } => {
                let mut e = 0.0;
                for k in 0..x.len() {
                    let z = (x[k] - mean[k]) / std[k];
                    e += 0.5 * z * z;
                }
                (-e).exp()
            }
            InitialDensity::Closure(f) => f(&x),
        };
        if !v.is_finite() || v < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "initial density must be finite and nonnegative, got {v} at {x:?}"
            )));
        }
        grid.values[idx] = v;
    }
    let mass = grid.mass();
    if !(mass > 0.0) {
        return Err(Error::InvalidArgument("initial density has zero mass on the box".into()));
    }
    if !matches!(rho0, InitialDensity::Uniform) {
        let bm = grid.boundary_mass() / mass;
        if bm > BOUNDARY_MASS_THRESHOLD {
            return Err(Error::DomainTooSmall {
                boundary_mass: bm,
                threshold: BOUNDARY_MASS_THRESHOLD,
            });
        }
    }
    // Resolution guard: each axis marginal needs at least 3 supported cells.
    for (axis_idx, axis) in grid.axes.iter().enumerate() {
        let mut marginal = vec![0.0; axis.n];
        for (idx, v) in grid.values.iter().enumerate() {
            let i = match grid.axes.len() {
                1 => idx,
                2 => {
                    if axis_idx == 0 {
                        idx / grid.axes[1].n
                    } else {
                        idx % grid.axes[1].n
                    }
                }
                _ => unreachable!(),
            };
            marginal[i] += v;
        }
        let mx = marginal.iter().cloned().fold(0.0_f64, f64::max);
        let support = marginal.iter().filter(|v| **v > 1e-12 * mx).count();
        if support < 3 {
            return Err(Error::ResolutionTooCoarse {
                axis: axis_idx,
                support_cells: support,
            });
        }
    }
    grid.normalize();
    Ok(grid)
}

/// Chang-Cooper left/right face weights for fitting parameter `w = A h / D`.
///
/// The weights make the discrete flux vanish exactly on the local equilibrium
/// `rho ~ e^{-A x / D}` and tend to pure upwinding as `|w| -> inf`.
fn cc_weights(w: f64) -> (f64, f64) {
    // returns (weight of left cell, weight of right cell)
    let delta = if w.abs() < 1e-8 {
        0.5 - w / 12.0
    } else if w > 700.0 {
        1.0 / w
    } else if w < -700.0 {
        1.0 + 1.0 / w
    } else {
        1.0 / w - 1.0 / w.exp_m1()
    };
    (delta, 1.0 - delta)
}

struct AxisFaces {
    /// advective coefficient `A` at each interior face
    a: Vec<f64>,
    /// diffusive coefficient `D` at each interior face
    d: Vec<f64>,
    /// Chang-Cooper weights per face
    wl: Vec<f64>,
    wr: Vec<f64>,
}

/// Precomputed face coefficients for a fixed (model, field, eps) on a grid.
pub struct FpSolver {
    axes: Vec<Axis>,
    faces: Vec<AxisFaces>,
    cfl_bound: f64,
    clip_budget_per_step: f64,
}

const OFF_DIAGONAL_TOL: f64 = 1e-9;
const CLIP_BUDGET_PER_STEP: f64 = 1e-10;

impl FpSolver {
    /// Build the face coefficients. Fails if `Q` is not diagonal on the grid.
    pub fn new(
        grid: &GridDensity,
        model: &LossModel,
        field: &DiffusionField,
        eps: f64,
    ) -> Result<Self> {
        let dim = grid.dim();
        if model.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: model.dim(),
            });
        }
        let mut gbuf = vec![0.0; dim];
        let mut mbuf = vec![0.0; dim];
        let mut q = DMatrix::zeros(dim, dim);
        let mut gradbuf = vec![0.0; dim];
        let mut scratch = vec![0.0; dim];

        // Diagonal entries of the noise matrix at every cell center.
        let n_total = grid.n_cells();
        let mut qdiag = vec![vec![0.0; n_total]; dim];
        for idx in 0..n_total {
            let x = grid.cell_center(idx);
            field.noise_matrix_into(&x, &mut q, &mut gbuf, &mut mbuf);
            let scale = q.trace().abs() + 1e-30;
            for i in 0..dim {
                for j in 0..dim {
                    if i != j && q[(i, j)].abs() > OFF_DIAGONAL_TOL * scale {
                        return Err(Error::NonDiagonalDiffusion {
                            i,
                            j,
                            value: q[(i, j)],
                            point: x.clone(),
                        });
                    }
                }
                qdiag[i][idx] = q[(i, i)].max(0.0);
            }
        }

        let eps2 = eps * eps;
        let mut faces = Vec::with_capacity(dim);
        let mut cfl: f64 = f64::INFINITY;
        for a_idx in 0..dim {
            let axis = &grid.axes[a_idx];
            let h = axis.h;
            let other_n = if dim == 2 { grid.axes[1 - a_idx].n } else { 1 };
            let n_faces = (axis.n - 1) * other_n;
            let mut fa = AxisFaces {
                a: vec![0.0; n_faces],
                d: vec![0.0; n_faces],
                wl: vec![0.0; n_faces],
                wr: vec![0.0; n_faces],
            };
            let mut max_a = 0.0_f64;
            let mut max_d = 0.0_f64;
            for f in 0..n_faces {
                // indices of the two cells sharing this face
                let (il, ir) = face_cells(dim, a_idx, f, grid);
                let xl = grid.cell_center(il);
                let xr = grid.cell_center(ir);
                let mid: Vec<f64> = xl.iter().zip(&xr).map(|(a, b)| 0.5 * (a + b)).collect();
                model.grad(&mid, &mut gradbuf, &mut scratch);
                let ql = qdiag[a_idx][il];
                let qr = qdiag[a_idx][ir];
                let d = eps2 * 0.5 * (ql + qr);
                let adv = gradbuf[a_idx] + eps2 * (qr - ql) / h;
                fa.d[f] = d;
                fa.a[f] = adv;
                if d > 0.0 {
                    let (wl, wr) = cc_weights(adv * h / d);
                    fa.wl[f] = wl;
                    fa.wr[f] = wr;
                } else {
                    // pure transport: velocity is -A, so A > 0 moves mass left
                    // and the upwind cell is the right one
                    if adv > 0.0 {
                        fa.wl[f] = 0.0;
                        fa.wr[f] = 1.0;
                    } else {
                        fa.wl[f] = 1.0;
                        fa.wr[f] = 0.0;
                    }
                }
                max_a = max_a.max(adv.abs());
                max_d = max_d.max(d);
            }
            if max_a > 0.0 {
                cfl = cfl.min(h / max_a);
            }
            if max_d > 0.0 {
                cfl = cfl.min(h * h / (2.0 * max_d));
            }
            faces.push(fa);
        }
        Ok(Self {
            axes: grid.axes.clone(),
            faces,
            cfl_bound: 0.4 * cfl,
            clip_budget_per_step: CLIP_BUDGET_PER_STEP,
        })
    }

    /// The CFL bound `0.4 * min(h/max|A|, h^2/(2 max D))` over all axes.
    pub fn cfl_bound(&self) -> f64 {
        self.cfl_bound
    }

    /// A time step that also keeps the multi-axis explicit update positive.
    pub fn max_stable_dt(&self) -> f64 {
        self.cfl_bound / self.axes.len() as f64
    }

    /// One conservative explicit step. Mass changes only by roundoff;
    /// negative values are clipped to zero against a per-step budget.
    pub fn step(&self, grid: &mut GridDensity, dt: f64) -> Result<()> {
        if grid.axes != self.axes {
            return Err(Error::InvalidArgument("grid does not match the solver".into()));
        }
        if dt > self.cfl_bound {
            return Err(Error::CflViolation {
                dt,
                bound: self.cfl_bound,
            });
        }
        let dim = grid.dim();
        let mut delta = vec![0.0; grid.values.len()];
        for a_idx in 0..dim {
            let axis = &self.axes[a_idx];
            let h = axis.h;
            let fa = &self.faces[a_idx];
            let n_faces = fa.a.len();
            for f in 0..n_faces {
                let (il, ir) = face_cells(dim, a_idx, f, grid);
                let rl = grid.values[il];
                let rr = grid.values[ir];
                // G = D * (rho_r - rho_l)/h + A * (wl*rho_l + wr*rho_r)
                let g = fa.d[f] * (rr - rl) / h + fa.a[f] * (fa.wl[f] * rl + fa.wr[f] * rr);
                // rho_t = sum_axis dG/dx: cell left of the face gains -G/h... no:
                // d/dx G at cell i uses G_{i+1/2} - G_{i-1/2}; face f is the
                // right face of il and the left face of ir.
                delta[il] += dt / h * g;
                delta[ir] -= dt / h * g;
            }
        }
        let vol = grid.cell_volume();
        let mut clipped = 0.0;
        for (v, d) in grid.values.iter_mut().zip(&delta) {
            *v += d;
            if *v < 0.0 {
                clipped += -*v * vol;
                *v = 0.0;
            }
        }
        if clipped > self.clip_budget_per_step {
            return Err(Error::ClippingBudgetExceeded {
                clipped,
                budget: self.clip_budget_per_step,
            });
        }
        grid.clipped_mass += clipped;
        grid.time += dt;
        Ok(())
    }

    /// Advance to `grid.time + t_span` with steps of at most `dt_max`.
    pub fn advance(&self, grid: &mut GridDensity, t_span: f64, dt_max: f64) -> Result<()> {
        let dt_cap = dt_max.min(self.max_stable_dt());
        let n = (t_span / dt_cap).ceil().max(1.0) as usize;
        let dt = t_span / n as f64;
        for _ in 0..n {
            self.step(grid, dt)?;
        }
        Ok(())
    }
}

/// Flat indices of the two cells sharing interior face `f` of `axis`.
fn face_cells(dim: usize, axis: usize, f: usize, grid: &GridDensity) -> (usize, usize) {
    match dim {
        1 => (f, f + 1),
        2 => {
            let n1 = grid.axes[1].n;
            if axis == 0 {
                // faces between (i, j) and (i+1, j): f = i * n1 + j
                let i = f / n1;
                let j = f % n1;
                (i * n1 + j, (i + 1) * n1 + j)
            } else {
                // faces between (i, j) and (i, j+1): f = i * (n1-1) + j
                let i = f / (n1 - 1);
                let j = f % (n1 - 1);
                (i * n1 + j, i * n1 + j + 1)
            }
        }
        _ => unreachable!(),
    }
}

/// One explicit step as a pure function (rebuilds coefficients; use
/// [`FpSolver`] for repeated stepping).
pub fn step_fp(
    grid: &GridDensity,
    model: &LossModel,
    field: &DiffusionField,
    eps: f64,
    dt: f64,
) -> Result<GridDensity> {
    let solver = FpSolver::new(grid, model, field, eps)?;
    let mut out = grid.clone();
    solver.step(&mut out, dt)?;
    Ok(out)
}

/// Gaussian (possibly degenerate) state of a linear Fokker-Planck flow.
#[derive(Debug, Clone)]
pub struct GaussianState {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    /// Axes carried as point masses (exactly zero covariance row/column).
    pub degenerate_axes: Vec<usize>,
}

impl GaussianState {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Self {
        Self {
            mean,
            cov,
            degenerate_axes: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `E|X - center|^2 = tr(cov) + |mean - center|^2`.
    pub fn second_moment(&self, center: &[f64]) -> f64 {
        let shift: f64 = self
            .mean
            .iter()
            .zip(center)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        self.cov.trace() + shift
    }

    /// Density at `x`; requires a nonsingular covariance.
    pub fn density(&self, x: &[f64]) -> Result<f64> {
        let d = self.dim();
        let chol = self
            .cov
            .clone()
            .cholesky()
            .ok_or_else(|| Error::LinearSolve("singular covariance in density".into()))?;
        let diff = DVector::from_iterator(d, x.iter().zip(self.mean.iter()).map(|(a, b)| a - b));
        let sol = chol.solve(&diff);
        let quad = diff.dot(&sol);
        let det = chol.l().diagonal().iter().map(|v| v * v).product::<f64>();
        Ok((-0.5 * quad).exp() / ((2.0 * std::f64::consts::PI).powi(d as i32) * det).sqrt())
    }
}

fn check_positive_stable(c: &DMatrix<f64>) -> Result<()> {
    let eigs = c.complex_eigenvalues();
    for e in eigs.iter() {
        if e.re <= 0.0 {
            return Err(Error::NotPositiveStable { re: e.re });
        }
    }
    Ok(())
}

/// Mean and covariance of the linear flow `rho_t = div(Q0 grad rho + rho C x)`
/// started from a Gaussian: `mean' = -C mean`, `cov' = -C cov - cov C^T + 2 Q0`,
/// integrated with a fixed-step classical Runge-Kutta scheme (`t/1000`).
pub fn ou_closed_form(
    q0: &DMatrix<f64>,
    c: &DMatrix<f64>,
    rho0: &GaussianState,
    t: f64,
) -> Result<GaussianState> {
    check_positive_stable(c)?;
    let min_eig = linalg::sym_min_eigenvalue(&{
        let mut s = q0.clone();
        linalg::symmetrize(&mut s);
        s
    });
    if min_eig < -1e-10 * (1.0 + q0.trace().abs()) {
        return Err(Error::NotPsd {
            eigenvalue: min_eig,
            tol: 1e-10,
        });
    }
    if t == 0.0 {
        return Ok(rho0.clone());
    }
    if t < 0.0 {
        return Err(Error::InvalidArgument("time must be nonnegative".into()));
    }
    let n_steps = 1000usize;
    let dt = t / n_steps as f64;
    let mut mean = rho0.mean.clone();
    let mut cov = rho0.cov.clone();
    let f_mean = |m: &DVector<f64>| -(c * m);
    let f_cov = |s: &DMatrix<f64>| -(c * s) - s * c.transpose() + 2.0 * q0;
    for _ in 0..n_steps {
        let k1m = f_mean(&mean);
        let k1c = f_cov(&cov);
        let k2m = f_mean(&(&mean + 0.5 * dt * &k1m));
        let k2c = f_cov(&(&cov + 0.5 * dt * &k1c));
        let k3m = f_mean(&(&mean + 0.5 * dt * &k2m));
        let k3c = f_cov(&(&cov + 0.5 * dt * &k2c));
        let k4m = f_mean(&(&mean + dt * &k3m));
        let k4c = f_cov(&(&cov + dt * &k3c));
        mean += dt / 6.0 * (&k1m + 2.0 * &k2m + 2.0 * &k3m + &k4m);
        cov += dt / 6.0 * (&k1c + 2.0 * &k2c + 2.0 * &k3c + &k4c);
        linalg::symmetrize(&mut cov);
        if linalg::sym_min_eigenvalue(&cov) < -1e-12 {
            cov = linalg::clamp_psd(&cov, 0.0);
        }
    }
    Ok(GaussianState {
        mean,
        cov,
        degenerate_axes: rho0.degenerate_axes.clone(),
    })
}

/// Block data for the decoupled degenerate flow: diffusion acts on the
/// x-block only, the y-block is pure contraction.
#[derive(Debug, Clone)]
pub struct ProductBlocks {
    pub q0: DMatrix<f64>,
    pub c0: DMatrix<f64>,
    pub c3: DMatrix<f64>,
}

impl ProductBlocks {
    /// Split a full drift matrix into blocks, rejecting nonzero coupling.
    pub fn from_full(q0: DMatrix<f64>, c: &DMatrix<f64>, n_x: usize) -> Result<Self> {
        let d = c.nrows();
        if n_x == 0 || n_x >= d {
            return Err(Error::InvalidArgument("x-block must be a strict nonempty prefix".into()));
        }
        for i in 0..d {
            for j in 0..d {
                let in_x = i < n_x && j < n_x;
                let in_y = i >= n_x && j >= n_x;
                if !in_x && !in_y && c[(i, j)] != 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "coupling block entry C[{i},{j}] = {} must be zero",
                        c[(i, j)]
                    )));
                }
            }
        }
        Ok(Self {
            q0,
            c0: c.view((0, 0), (n_x, n_x)).into_owned(),
            c3: c.view((n_x, n_x), (d - n_x, d - n_x)).into_owned(),
        })
    }
}

/// Product datum: Gaussian x-marginal times a y-distribution summarized by
/// its second-moment matrix `E[y y^T]`.
#[derive(Debug, Clone)]
pub struct ProductDatum {
    pub x_state: GaussianState,
    pub y_second_moment: DMatrix<f64>,
}

/// Structured solution of the decoupled flow at time `t`.
#[derive(Debug, Clone)]
pub struct ProductSolution {
    pub x_state: GaussianState,
    /// `e^{-C3 t}`: positions transport as `y -> e^{-C3 t} y`.
    pub y_contraction: DMatrix<f64>,
    /// `E[y(t) y(t)^T] = e^{-C3 t} E[y0 y0^T] e^{-C3^T t}`.
    pub y_second_moment: DMatrix<f64>,
    /// `tr(C3) t`: log of the Jacobian factor carried by the transported
    /// density.
    pub jacobian_log: f64,
}

impl ProductSolution {
    pub fn second_moment(&self) -> f64 {
        self.x_state.second_moment(&vec![0.0; self.x_state.dim()]) + self.y_second_moment.trace()
    }
}

/// Evolve a product datum under the block-decoupled flow: the x-marginal by
/// the Gaussian closed form, the y-mass by the contraction `y -> e^{-C3 t} y`.
/// `C3` must be symmetric positive definite.
pub fn degenerate_product_solution(
    blocks: &ProductBlocks,
    datum: &ProductDatum,
    t: f64,
) -> Result<ProductSolution> {
    if linalg::max_asymmetry(&blocks.c3) > 1e-12 {
        return Err(Error::NotSymmetric {
            asym: linalg::max_asymmetry(&blocks.c3),
            tol: 1e-12,
        });
    }
    if linalg::sym_min_eigenvalue(&blocks.c3) <= 0.0 {
        return Err(Error::NotPositiveStable {
            re: linalg::sym_min_eigenvalue(&blocks.c3),
        });
    }
    let x_state = ou_closed_form(&blocks.q0, &blocks.c0, &datum.x_state, t)?;
    let contraction = linalg::sym_expm(&(-t * &blocks.c3));
    let y_m2 = &contraction * &datum.y_second_moment * contraction.transpose();
    Ok(ProductSolution {
        x_state,
        y_contraction: contraction,
        y_second_moment: y_m2,
        jacobian_log: blocks.c3.trace() * t,
    })
}

/// Solution of the Lyapunov equation `2 Q0 = C K + K C^T`.
#[derive(Debug, Clone)]
pub struct LyapunovSolution {
    pub k: DMatrix<f64>,
    /// `||2Q0 - CK - KC^T||_F`
    pub residual: f64,
    /// No eigenvector of `C^T` lies in `ker Q0`; equivalently `K` is positive
    /// definite and the steady state has an L^1 density.
    pub hormander_ok: bool,
    pub min_eig_k: f64,
}

/// Solve `2 Q0 = C K + K C^T` for positive-stable `C` and PSD `Q0`.
///
/// A symmetric `C` goes through its eigenbasis (`K_ij = B_ij / (mu_i + mu_j)`
/// with `B = V^T 2Q0 V`); a nonsymmetric one falls back to the Kronecker
/// linear system. The Hörmander flag is reported, never assumed.
pub fn lyapunov_solve(q0: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<LyapunovSolution> {
    let d = q0.nrows();
    if c.nrows() != d || c.ncols() != d || q0.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: c.nrows(),
        });
    }
    check_positive_stable(c)?;
    let mut q0s = q0.clone();
    linalg::symmetrize(&mut q0s);
    let qmin = linalg::sym_min_eigenvalue(&q0s);
    if qmin < -1e-10 * (1.0 + q0s.trace().abs()) {
        return Err(Error::NotPsd {
            eigenvalue: qmin,
            tol: 1e-10,
        });
    }

    let c_norm = linalg::fro_norm(c);
    let symmetric_c = linalg::max_asymmetry(c) <= 1e-12 * (1.0 + c_norm);
    let (k, hormander_ok) = if symmetric_c {
        let eig = c.clone().symmetric_eigen();
        let v = &eig.eigenvectors;
        let b = v.transpose() * (2.0 * &q0s) * v;
        let mut kp = DMatrix::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                kp[(i, j)] = b[(i, j)] / (eig.eigenvalues[i] + eig.eigenvalues[j]);
            }
        }
        let mut k = v * kp * v.transpose();
        linalg::symmetrize(&mut k);
        // Condition check per eigenspace: an eigenvector of C^T in ker Q0
        // exists iff some unit vector u in the eigenspace has Q0 u = 0.
        let q_scale = linalg::sym_eigenvalues(&q0s)
            .last()
            .copied()
            .unwrap_or(0.0)
            .abs()
            .max(1e-300);
        let eig_scale = eig.eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|a, b| eig.eigenvalues[*a].partial_cmp(&eig.eigenvalues[*b]).unwrap());
        for idx in order {
            match groups.last_mut() {
                Some(g) if (eig.eigenvalues[idx] - eig.eigenvalues[g[0]]).abs() <= 1e-8 * (1.0 + eig_scale) => {
                    g.push(idx)
                }
                _ => groups.push(vec![idx]),
            }
        }
        let mut ok = true;
        for g in &groups {
            let mut u = DMatrix::zeros(d, g.len());
            for (col, &idx) in g.iter().enumerate() {
                u.set_column(col, &v.column(idx));
            }
            let qu = &q0s * &u;
            let sv = qu.svd(false, false);
            let smin = sv.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
            if smin <= 1e-8 * q_scale {
                ok = false;
            }
        }
        (k, ok)
    } else {
        // vec(CK) + vec(K C^T) = (I (x) C + C (x) I) vec(K)
        let id = DMatrix::<f64>::identity(d, d);
        let big = id.kronecker(c) + c.kronecker(&id);
        let rhs = DVector::from_column_slice((2.0 * &q0s).as_slice());
        let sol = big
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::LinearSolve("singular Lyapunov system".into()))?;
        let mut k = DMatrix::from_column_slice(d, d, sol.as_slice());
        linalg::symmetrize(&mut k);
        let min_eig = linalg::sym_min_eigenvalue(&k);
        let ok = min_eig > 1e-10 * (1.0 + linalg::fro_norm(&k));
        (k, ok)
    };

    let residual = linalg::fro_norm(&(2.0 * &q0s - c * &k - &k * c.transpose()));
    let min_eig_k = linalg::sym_min_eigenvalue(&k);
    Ok(LyapunovSolution {
        k,
        residual,
        hormander_ok,
        min_eig_k,
    })
}

const GIBBS_BOUNDARY_THRESHOLD: f64 = 1e-6;

/// Normalized grid density proportional to `e^{-L(x)/(eps^2 sigma)}`, the
/// stationary state of the isotropic flow `Q = sigma I`.
pub fn gibbs_steady_state(
    model: &LossModel,
    eps: f64,
    sigma: f64,
    spec: &GridSpec,
) -> Result<GridDensity> {
    if !(eps > 0.0) || !(sigma > 0.0) {
        return Err(Error::InvalidArgument("eps and sigma must be positive".into()));
    }
    let temp = eps * eps * sigma;
    // Subtract the minimum sampled loss before exponentiating.
    let axes = spec.axes()?;
    let mut grid = GridDensity {
        axes,
        values: Vec::new(),
        time: 0.0,
        clipped_mass: 0.0,
    };
    let n_total: usize = grid.axes.iter().map(|a| a.n).product();
    grid.values = vec![0.0; n_total];
    let mut lvals = vec![0.0; n_total];
    let mut lmin = f64::INFINITY;
    for idx in 0..n_total {
        let x = grid.cell_center(idx);
        let l = model.value(&x);
        if !l.is_finite() {
            return Err(Error::NonFinite {
                what: "loss",
                x,
                sample: None,
            });
        }
        lvals[idx] = l;
        lmin = lmin.min(l);
    }
    for idx in 0..n_total {
        grid.values[idx] = (-(lvals[idx] - lmin) / temp).exp();
    }
    let mass = grid.mass();
    let bm = grid.boundary_mass() / mass;
    if bm > GIBBS_BOUNDARY_THRESHOLD {
        return Err(Error::NonIntegrableTail { boundary_mass: bm });
    }
    grid.normalize();
    Ok(grid)
}

/// One entry of the delta-to-zero steady-state probe.
#[derive(Debug)]
pub struct DeltaProbe {
    pub delta: f64,
    pub density: GridDensity,
    /// `(radius, mass outside B_radius(0))` for each requested radius.
    pub tail_masses: Vec<(f64, f64)>,
    /// L1 change per unit time at the horizon.
    pub l1_drift_rate: f64,
}

/// Integrate the regularized flow (`Q_delta = Q/b + delta I`) to the horizon
/// for each `delta` and report the long-time density with its tail masses.
///
/// The drift check compares the density at the horizon with the density a
/// short interval later; a drift rate above `drift_threshold` means the
/// horizon has not reached stationarity.
#[allow(clippy::too_many_arguments)]
pub fn steady_state_probe_delta_to_zero(
    model: &std::sync::Arc<LossModel>,
    eps: f64,
    deltas: &[f64],
    spec: &GridSpec,
    rho0: &InitialDensity,
    horizon: f64,
    ball_radii: &[f64],
    drift_threshold: f64,
) -> Result<Vec<DeltaProbe>> {
    if deltas.is_empty() || deltas.windows(2).any(|w| w[1] >= w[0]) || deltas.iter().any(|d| *d <= 0.0)
    {
        return Err(Error::InvalidArgument(
            "delta list must be positive and strictly decreasing".into(),
        ));
    }
    let center = vec![0.0; spec.lo.len()];
    let mut out = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        let field = DiffusionField::new(model.clone(), delta, 1)?;
        let mut grid = init_grid(spec, rho0)?;
        let solver = FpSolver::new(&grid, model, &field, eps)?;
        let dt = solver.max_stable_dt();
        solver.advance(&mut grid, horizon, dt)?;
        // stationarity probe on a throwaway copy; the reported density is
        // the horizon state itself
        let probe_span = (0.05 * horizon).max(dt);
        let mut probe = grid.clone();
        solver.advance(&mut probe, probe_span, dt)?;
        let drift = grid.l1_distance(&probe)? / probe_span;
        if drift > drift_threshold {
            return Err(Error::HorizonInsufficient {
                drift,
                threshold: drift_threshold,
            });
        }
        let tails = ball_radii
            .iter()
            .map(|&r| (r, grid.mass_outside_ball(&center, r)))
            .collect();
        out.push(DeltaProbe {
            delta,
            density: grid,
            tail_masses: tails,
            l1_drift_rate: drift,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::catalog;
    use approx::assert_relative_eq;
    use std::sync::Arc;

    fn gaussian_1d(spec: &GridSpec, mean: f64, std: f64) -> GridDensity {
        init_grid(
            spec,
            &InitialDensity::Gaussian {
                mean: vec![mean],
                std: vec![std],
            },
        )
        .unwrap()
    }

    #[test]
    fn uniform_init_has_unit_mass_and_equal_cells() {
        let spec = GridSpec::new_1d(-1.0, 1.0, 10);
        let g = init_grid(&spec, &InitialDensity::Uniform).unwrap();
        assert_relative_eq!(g.mass(), 1.0, epsilon = 1e-12);
        for v in &g.values {
            assert_relative_eq!(*v, 0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn truncated_gaussian_is_rejected() {
        let spec = GridSpec::new_1d(-1.0, 1.0, 50);
        let res = init_grid(
            &spec,
            &InitialDensity::Gaussian {
                mean: vec![0.9],
                std: vec![0.5],
            },
        );
        assert!(matches!(res, Err(Error::DomainTooSmall { .. })));
    }

    #[test]
    fn dirac_like_datum_is_rejected() {
        let spec = GridSpec::new_1d(-1.0, 1.0, 21);
        let res = init_grid(
            &spec,
            &InitialDensity::Gaussian {
                mean: vec![0.0],
                std: vec![1e-3],
            },
        );
        assert!(matches!(res, Err(Error::ResolutionTooCoarse { .. })));
    }

    #[test]
    fn frozen_dynamics_leaves_the_grid_unchanged() {
        // grad L = 0 and Q = 0
        let model = catalog::linear_pair_1d(0.0);
        let field = DiffusionField::bare(Arc::new(catalog::linear_pair_1d(0.0)));
        let spec = GridSpec::new_1d(-1.0, 1.0, 32);
        let g0 = gaussian_1d(&spec, 0.0, 0.12);
        let g1 = step_fp(&g0, &model, &field, 0.1, 1e-3).unwrap();
        for (a, b) in g0.values.iter().zip(&g1.values) {
            assert_relative_eq!(a, b, epsilon = 1e-13);
        }
    }

    #[test]
    fn mass_is_conserved_and_positive_on_the_ou_flow() {
        let model = catalog::quadratic_noisy(1, 1.0, 1.0, 1);
        let field = DiffusionField::bare(Arc::new(catalog::quadratic_noisy(1, 1.0, 1.0, 1)));
        let spec = GridSpec::new_1d(-1.0, 1.0, 100);
        let mut g = gaussian_1d(&spec, 0.2, 0.1);
        let solver = FpSolver::new(&g, &model, &field, 0.1).unwrap();
        let dt = solver.max_stable_dt();
        for _ in 0..500 {
            solver.step(&mut g, dt).unwrap();
        }
        assert_relative_eq!(g.mass(), 1.0, epsilon = 1e-9);
        assert!(g.values.iter().all(|v| *v >= 0.0));
        assert!(g.clipped_mass <= 1e-10);
    }

    #[test]
    fn cfl_violation_is_reported() {
        let model = catalog::quadratic_noisy(1, 1.0, 1.0, 1);
        let field = DiffusionField::bare(Arc::new(catalog::quadratic_noisy(1, 1.0, 1.0, 1)));
        let spec = GridSpec::new_1d(-1.0, 1.0, 100);
        let mut g = gaussian_1d(&spec, 0.0, 0.15);
        let solver = FpSolver::new(&g, &model, &field, 0.1).unwrap();
        let res = solver.step(&mut g, 10.0 * solver.cfl_bound());
        assert!(matches!(res, Err(Error::CflViolation { .. })));
    }

    #[test]
    fn symmetric_double_well_evolution_stays_symmetric() {
        let model = catalog::double_well_1d_noisy(1.0, 1.0, 3.0);
        let field = DiffusionField::bare(Arc::new(catalog::double_well_1d_noisy(1.0, 1.0, 3.0)));
        let spec = GridSpec::new_1d(-2.0, 2.0, 128);
        let mut g = gaussian_1d(&spec, 0.0, 0.3);
        let solver = FpSolver::new(&g, &model, &field, 0.35).unwrap();
        let dt = solver.max_stable_dt();
        let n = g.values.len();
        for _ in 0..300 {
            solver.step(&mut g, dt).unwrap();
            for i in 0..n / 2 {
                assert!(
                    (g.values[i] - g.values[n - 1 - i]).abs() <= 1e-9,
                    "asymmetry at cell {i}"
                );
            }
        }
    }

    #[test]
    fn off_diagonal_diffusion_is_rejected() {
        // dataset with correlated gradients in 2D => dense Q
        let model = Arc::new(
            catalog::dataset_quadratic(vec![
                (vec![1.0, 0.5], 0.3),
                (vec![0.2, -1.0], -0.1),
                (vec![0.6, 0.6], 0.0),
            ])
            .unwrap(),
        );
        let field = DiffusionField::bare(model.clone());
        let spec = GridSpec::new_2d([-1.0, -1.0], [1.0, 1.0], [16, 16]);
        let g = init_grid(
            &spec,
            &InitialDensity::Gaussian {
                mean: vec![0.0, 0.0],
                std: vec![0.12, 0.12],
            },
        )
        .unwrap();
        let res = FpSolver::new(&g, &model, &field, 0.1);
        assert!(matches!(res, Err(Error::NonDiagonalDiffusion { .. })));
    }

    #[test]
    fn ou_closed_form_at_zero_time_is_identity() {
        let q0 = DMatrix::identity(2, 2);
        let c = DMatrix::identity(2, 2);
        let rho0 = GaussianState::new(
            DVector::from_vec(vec![0.3, -0.2]),
            DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 0.25])),
        );
        let out = ou_closed_form(&q0, &c, &rho0, 0.0).unwrap();
        assert_eq!(out.mean, rho0.mean);
        assert_eq!(out.cov, rho0.cov);
    }

    #[test]
    fn isotropic_ou_reaches_the_known_stationary_moments() {
        // Q0 = eps^2 (sigma/d) I, C = lambda I: coordinate variance tends to
        // eps^2 sigma/(lambda d), total second moment to eps^2 sigma / lambda.
        let (lam, sigma, eps, d) = (1.0, 1.0, 0.1_f64, 2usize);
        let q0 = DMatrix::identity(d, d) * (eps * eps * sigma / d as f64);
        let c = DMatrix::identity(d, d) * lam;
        let rho0 = GaussianState::new(
            DVector::from_vec(vec![0.4, -0.1]),
            DMatrix::identity(d, d) * 0.09,
        );
        let out = ou_closed_form(&q0, &c, &rho0, 15.0).unwrap();
        let want = eps * eps * sigma / (lam * d as f64);
        for i in 0..d {
            assert_relative_eq!(out.cov[(i, i)], want, max_relative = 1e-6);
        }
        assert_relative_eq!(
            out.second_moment(&vec![0.0; d]),
            eps * eps * sigma / lam,
            max_relative = 1e-5
        );
    }

    #[test]
    fn zero_diffusion_ou_is_a_pure_contraction() {
        let q0 = DMatrix::zeros(2, 2);
        let c = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0]));
        let s0 = DMatrix::from_diagonal(&DVector::from_vec(vec![0.2, 0.3]));
        let rho0 = GaussianState::new(DVector::from_vec(vec![1.0, 1.0]), s0.clone());
        let t = 0.7;
        let out = ou_closed_form(&q0, &c, &rho0, t).unwrap();
        for i in 0..2 {
            let ci = c[(i, i)];
            assert_relative_eq!(out.mean[i], (-ci * t).exp(), max_relative = 1e-9);
            assert_relative_eq!(
                out.cov[(i, i)],
                s0[(i, i)] * (-2.0 * ci * t).exp(),
                max_relative = 1e-9
            );
        }
    }

    #[test]
    fn lyapunov_identity_drift_returns_q0() {
        let q0 = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let c = DMatrix::identity(2, 2);
        let sol = lyapunov_solve(&q0, &c).unwrap();
        assert_relative_eq!(sol.k, q0, epsilon = 1e-12);
        assert!(sol.hormander_ok);
    }

    #[test]
    fn lyapunov_diagonal_case_matches_hand_solution() {
        // C = diag(1,2), Q0 = I: K_ij = 2 delta_ij / (c_i + c_j) = diag(1, 1/2)
        let q0 = DMatrix::identity(2, 2);
        let c = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0]));
        let sol = lyapunov_solve(&q0, &c).unwrap();
        assert_relative_eq!(sol.k[(0, 0)], 1.0, epsilon = 1e-12);
        assert_relative_eq!(sol.k[(1, 1)], 0.5, epsilon = 1e-12);
        assert_relative_eq!(sol.k[(0, 1)], 0.0, epsilon = 1e-12);
        assert!(sol.residual <= 1e-10 * (1.0 + linalg::fro_norm(&q0)));
    }

    #[test]
    fn lyapunov_flags_the_degenerate_isotropic_drift() {
        // Q0 = diag(sigma, 0), C = lambda I: e_2 is an eigenvector in ker Q0.
        let q0 = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0]));
        let c = DMatrix::identity(2, 2) * 0.8;
        let sol = lyapunov_solve(&q0, &c).unwrap();
        assert!(!sol.hormander_ok);
        assert!(sol.min_eig_k.abs() < 1e-12);
    }

    #[test]
    fn lyapunov_nonsymmetric_positive_stable_drift() {
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 0.7, -0.3, 1.5]);
        let q0 = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.5]);
        let sol = lyapunov_solve(&q0, &c).unwrap();
        assert!(sol.residual <= 1e-10 * (1.0 + linalg::fro_norm(&q0)));
        assert!(sol.hormander_ok);
        assert!(sol.min_eig_k > 0.0);
    }

    #[test]
    fn gibbs_state_of_a_quadratic_is_a_gaussian() {
        let model = catalog::quadratic(1, 1.0, None);
        let (eps, sigma) = (0.3, 1.0);
        let spec = GridSpec::new_1d(-2.0, 2.0, 400);
        let g = gibbs_steady_state(&model, eps, sigma, &spec).unwrap();
        assert_relative_eq!(g.mass(), 1.0, epsilon = 1e-12);
        let m2 = g.second_moment(&[0.0]);
        assert_relative_eq!(m2, eps * eps * sigma, max_relative = 1e-3);
    }

    #[test]
    fn gibbs_rejects_non_confining_losses() {
        // constant loss on a finite box: flat tails carry boundary mass
        let model = catalog::linear_pair_1d(0.0);
        let spec = GridSpec::new_1d(-1.0, 1.0, 64);
        let res = gibbs_steady_state(&model, 0.1, 1.0, &spec);
        assert!(matches!(res, Err(Error::NonIntegrableTail { .. })));
    }

    #[test]
    fn gibbs_double_well_mass_ratio_follows_the_barrier() {
        // Asymmetric tilt: mass ratio between wells ~ e^{-dL/(eps^2 sigma)}.
        let tilt = 0.05;
        let model = catalog::custom_1d(
            |x| (x * x - 1.0) * (x * x - 1.0) + 0.05 * x,
            |x| 4.0 * x * (x * x - 1.0) + 0.05,
            |x| 12.0 * x * x - 4.0,
        );
        let (eps, sigma) = (0.45_f64, 1.0);
        let spec = GridSpec::new_1d(-2.2, 2.2, 2000);
        let g = gibbs_steady_state(&model, eps, sigma, &spec).unwrap();
        let vol = g.cell_volume();
        let (mut left, mut right) = (0.0, 0.0);
        for (idx, v) in g.values.iter().enumerate() {
            if g.axes[0].center(idx) < 0.0 {
                left += v * vol;
            } else {
                right += v * vol;
            }
        }
        // Laplace ratio: wells near +-1 (shifted O(tilt)), depth gap ~ 2*tilt*1.
        let dl = 2.0 * tilt;
        let predicted = (-dl / (eps * eps * sigma)).exp();
        let measured = right / left;
        assert!(
            (measured / predicted - 1.0).abs() < 0.1,
            "mass ratio {measured} vs Laplace {predicted}"
        );
    }

    #[test]
    fn delta_probe_recovers_the_lyapunov_gaussian() {
        // Quadratic with Q = 0: the regularized flow has steady covariance
        // solving 2(eps^2 delta I) = lambda K + K lambda => K = eps^2 delta/lambda.
        let model = Arc::new(catalog::quadratic(1, 1.0, None));
        let eps = 0.5;
        let deltas = [0.4, 0.2];
        let spec = GridSpec::new_1d(-2.0, 2.0, 200);
        let probes = steady_state_probe_delta_to_zero(
            &model,
            eps,
            &deltas,
            &spec,
            &InitialDensity::Gaussian {
                mean: vec![0.3],
                std: vec![0.2],
            },
            18.0,
            &[0.5, 1.0, 1.5],
            1e-4,
        )
        .unwrap();
        for probe in &probes {
            let want = eps * eps * probe.delta / 1.0;
            let got = probe.density.second_moment(&[0.0]);
            assert_relative_eq!(got, want, max_relative = 0.02);
            // tails shrink with radius
            assert!(probe.tail_masses[0].1 >= probe.tail_masses[1].1);
            assert!(probe.tail_masses[1].1 >= probe.tail_masses[2].1);
        }
        // smaller delta => smaller spread
        assert!(probes[1].density.second_moment(&[0.0]) < probes[0].density.second_moment(&[0.0]));
    }

    #[test]
    fn product_solution_contracts_the_y_block() {
        // x-block: Q0 = C0 = 1 (stationary unit Gaussian); y-block scalar.
        let blocks = ProductBlocks {
            q0: DMatrix::identity(1, 1),
            c0: DMatrix::identity(1, 1),
            c3: DMatrix::from_element(1, 1, 0.7),
        };
        let datum = ProductDatum {
            x_state: GaussianState::new(DVector::zeros(1), DMatrix::identity(1, 1)),
            y_second_moment: DMatrix::from_element(1, 1, 1.0),
        };
        let t = 2.0;
        let sol = degenerate_product_solution(&blocks, &datum, t).unwrap();
        // exact contraction of the y second moment
        assert_relative_eq!(
            sol.y_second_moment[(0, 0)],
            (-2.0 * 0.7 * t).exp(),
            max_relative = 1e-12
        );
        assert_relative_eq!(sol.jacobian_log, 0.7 * t, epsilon = 1e-12);
        // x-marginal stays the unit Gaussian
        assert_relative_eq!(sol.x_state.cov[(0, 0)], 1.0, max_relative = 1e-9);
        // t = 0 returns the datum
        let sol0 = degenerate_product_solution(&blocks, &datum, 0.0).unwrap();
        assert_relative_eq!(sol0.second_moment(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn coupled_blocks_are_rejected() {
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        let res = ProductBlocks::from_full(DMatrix::identity(1, 1), &c, 1);
        assert!(res.is_err());
    }
}
