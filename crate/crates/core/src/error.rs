//! Error type shared by all laboratory modules.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite {what} at x = {x:?} (sample {sample:?})")]
    NonFinite {
        what: &'static str,
        x: Vec<f64>,
        sample: Option<usize>,
    },

    #[error("matrix is not symmetric within tolerance {tol:e} (max asymmetry {asym:e})")]
    NotSymmetric { asym: f64, tol: f64 },

    #[error("matrix is not positive semidefinite: eigenvalue {eigenvalue:e} below -{tol:e}")]
    NotPsd { eigenvalue: f64, tol: f64 },

    #[error("matrix is not positive stable: eigenvalue with real part {re:e}")]
    NotPositiveStable { re: f64 },

    #[error("divergent update at step {step} (trajectory {trajectory})")]
    DivergentUpdate { step: usize, trajectory: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("grid domain too small: boundary cells carry mass fraction {boundary_mass:e} > {threshold:e}")]
    DomainTooSmall { boundary_mass: f64, threshold: f64 },

    #[error("initial density is narrower than the grid can resolve ({support_cells} support cells on axis {axis})")]
    ResolutionTooCoarse { axis: usize, support_cells: usize },

    #[error("time step {dt:e} violates the CFL bound {bound:e}")]
    CflViolation { dt: f64, bound: f64 },

    #[error("positivity clipping budget exceeded: clipped mass {clipped:e} in one step (budget {budget:e})")]
    ClippingBudgetExceeded { clipped: f64, budget: f64 },

    #[error("off-diagonal diffusion on the grid region: |Q_{i}{j}| = {value:e} at {point:?}")]
    NonDiagonalDiffusion {
        i: usize,
        j: usize,
        value: f64,
        point: Vec<f64>,
    },

    #[error("diffusion coefficient must be strictly positive on the interval (min {qmin:e})")]
    DegenerateDiffusion { qmin: f64 },

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("no interior critical point found: {0}")]
    NoMinimumFound(String),

    #[error("saddle scan hit the segment endpoint; no interior maximum between the minima")]
    SaddleAtEndpoint,

    #[error("saddle has the wrong signature: eigenvalues {eigenvalues:?} (need exactly one negative)")]
    SaddleSignature { eigenvalues: Vec<f64> },

    #[error("point is not a certified minimum: {0}")]
    NotAMinimum(String),

    #[error("relative entropy undefined: mass {excluded:e} lies where the reference density underflows")]
    EntropyUndefined { excluded: f64 },

    #[error("mismatched masses or sample counts: {0}")]
    MismatchedMasses(String),

    #[error("trace does not cover the requested window [{t0}, {t1}]")]
    WindowNotCovered { t0: f64, t1: f64 },

    #[error("steady-state probe horizon insufficient: L1 drift {drift:e} per unit time above {threshold:e}")]
    HorizonInsufficient { drift: f64, threshold: f64 },

    #[error("non-integrable tail: boundary mass fraction {boundary_mass:e}")]
    NonIntegrableTail { boundary_mass: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
