//! Numerical laboratory for the continuous-time view of stochastic gradient
//! descent: dataset-backed loss landscapes with their minibatch-noise
//! covariance, SGD/NSGD iterations next to the matching degenerate diffusion,
//! a conservative Fokker-Planck grid solver, mean-exit-time bounds and
//! Kramers predictions, and long-time entropy/Wasserstein diagnostics.
//!
//! Everything stochastic is keyed by `(root seed, trajectory index)` streams,
//! so runs are bit-reproducible under any degree of parallelism.

pub mod asymptotics;
pub mod concentration;
pub mod error;
pub mod exit_time;
pub mod fokker_planck;
pub mod linalg;
pub mod model;
pub mod rng;
pub mod simulate;

pub use error::{Error, Result};
