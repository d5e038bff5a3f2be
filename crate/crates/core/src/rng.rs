//! Reproducible random streams.
//!
//! Every stochastic routine takes a root seed and derives one ChaCha stream
//! per trajectory: stream `k` of seed `s` is the same byte sequence no matter
//! how trajectories are scheduled across threads. Draws within a trajectory
//! are consumed sequentially, so a trace is a pure function of
//! `(root seed, trajectory index)`.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Counter-based stream for one trajectory.
pub type StreamRng = ChaCha12Rng;

/// The stream for trajectory `index` under `root_seed`.
pub fn trajectory_stream(root_seed: u64, index: u64) -> StreamRng {
    let mut rng = ChaCha12Rng::seed_from_u64(root_seed);
    rng.set_stream(index);
    rng
}

/// A deterministic low-discrepancy sequence (digit-scrambled Halton).
///
/// The per-base digit permutations are derived from a fixed constant, so probe
/// sets built from this sequence are identical across runs and platforms.
pub struct ScrambledHalton {
    bases: Vec<u64>,
    perms: Vec<Vec<u64>>,
    index: u64,
}

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];
const SCRAMBLE_SEED: u64 = 0x9e37_79b9_7f4a_7c15;

impl ScrambledHalton {
    /// Sequence over `[0,1]^dim` (dim <= 16).
    pub fn new(dim: usize) -> Self {
        assert!(dim <= PRIMES.len(), "halton sequence limited to 16 dims");
        let bases: Vec<u64> = PRIMES[..dim].to_vec();
        let perms = bases
            .iter()
            .enumerate()
            .map(|(i, &b)| fixed_permutation(b, SCRAMBLE_SEED ^ (i as u64).wrapping_mul(0xa076_1d64_78bd_642f)))
            .collect();
        Self { bases, perms, index: 0 }
    }

    /// Next point in the unit cube. Index 0 is skipped (it maps to the origin).
    pub fn next_point(&mut self) -> Vec<f64> {
        self.index += 1;
        let i = self.index;
        self.bases
            .iter()
            .zip(&self.perms)
            .map(|(&b, perm)| radical_inverse(i, b, perm))
            .collect()
    }
}

fn radical_inverse(mut i: u64, base: u64, perm: &[u64]) -> f64 {
    let mut inv = 0.0_f64;
    let mut frac = 1.0 / base as f64;
    while i > 0 {
        let digit = perm[(i % base) as usize];
        inv += digit as f64 * frac;
        frac /= base as f64;
        i /= base;
    }
    inv
}

/// Fisher-Yates permutation of 0..base driven by splitmix64, keeping 0 fixed
/// so the radical inverse stays injective near zero.
fn fixed_permutation(base: u64, seed: u64) -> Vec<u64> {
    let mut p: Vec<u64> = (0..base).collect();
    let mut state = seed;
    for i in (2..base as usize).rev() {
        state = splitmix64(&mut state);
        let j = 1 + (state % i as u64) as usize;
        p.swap(i, j);
    }
    p
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic probe set of `n` points in the closed ball `B_radius(center)`.
///
/// Directions come from Box-Muller applied to Halton coordinates; radii use
/// the `u^{1/d}` volume transform. The center itself is always included.
pub fn ball_probe_set(center: &[f64], radius: f64, n: usize) -> Vec<Vec<f64>> {
    let d = center.len();
    let mut seq = ScrambledHalton::new(2 * d + 1);
    let mut out = Vec::with_capacity(n);
    out.push(center.to_vec());
    while out.len() < n {
        let u = seq.next_point();
        let mut dir = vec![0.0; d];
        for k in 0..d {
            let u1 = u[2 * k].max(1e-12);
            let u2 = u[2 * k + 1];
            dir[k] = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
        }
        let nrm = crate::linalg::norm(&dir);
        if nrm < 1e-12 {
            continue;
        }
        let r = radius * u[2 * d].powf(1.0 / d as f64);
        let p: Vec<f64> = center
            .iter()
            .zip(&dir)
            .map(|(c, v)| c + r * v / nrm)
            .collect();
        out.push(p);
    }
    out
}

/// Deterministic probe set of `n` points in an axis-aligned box.
pub fn box_probe_set(lo: &[f64], hi: &[f64], n: usize) -> Vec<Vec<f64>> {
    let d = lo.len();
    let mut seq = ScrambledHalton::new(d);
    (0..n)
        .map(|_| {
            let u = seq.next_point();
            (0..d).map(|k| lo[k] + (hi[k] - lo[k]) * u[k]).collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::RngCore;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let mut a = trajectory_stream(7, 0);
        let mut b = trajectory_stream(7, 0);
        let mut c = trajectory_stream(7, 1);
        let (xa, xb, xc) = (a.next_u64(), b.next_u64(), c.next_u64());
        assert_eq!(xa, xb);
        assert_ne!(xa, xc);
    }

    #[test]
    fn halton_is_deterministic_and_in_cube() {
        let mut s1 = ScrambledHalton::new(3);
        let mut s2 = ScrambledHalton::new(3);
        for _ in 0..100 {
            let p1 = s1.next_point();
            let p2 = s2.next_point();
            assert_eq!(p1, p2);
            assert!(p1.iter().all(|&v| (0.0..1.0).contains(&v)));
        }
    }

    #[test]
    fn ball_probes_stay_in_ball_and_include_center() {
        let c = vec![1.0, -2.0];
        let pts = ball_probe_set(&c, 0.5, 64);
        assert_eq!(pts[0], c);
        assert_eq!(pts.len(), 64);
        for p in &pts {
            let r: f64 = p.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            assert!(r <= 0.5 + 1e-12);
        }
    }
}
