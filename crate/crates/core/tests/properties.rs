//! Property tests for the structural invariants.

mod common;

use common::w2_exhaustive;
use proptest::prelude::*;
use sgdlab_core::asymptotics::{moment_norm_weighted, wasserstein2_1d};
use sgdlab_core::concentration::{cutoff, CutoffSpec};
use sgdlab_core::linalg;

proptest! {
    #[test]
    fn cutoff_stays_in_unit_interval_and_decreases(
        r0 in 0.05f64..5.0,
        delta in 0.05f64..1.0,
        lambda in 0.0f64..4.0,
        t in 0.0f64..3.0,
        r_base in 0.0f64..8.0,
        step in 1e-6f64..1.0,
    ) {
        let spec = CutoffSpec::new(r0, delta, lambda, 0.0, vec![0.0]).unwrap();
        let a = cutoff(&spec, t, r_base);
        let b = cutoff(&spec, t, r_base + step);
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!((0.0..=1.0).contains(&b));
        prop_assert!(b <= a + 1e-12);
    }

    #[test]
    fn cutoff_is_one_inside_and_zero_outside_prop(
        r0 in 0.05f64..5.0,
        delta in 0.05f64..1.0,
        lambda in 0.0f64..4.0,
        t in 0.0f64..3.0,
        frac in 0.0f64..1.0,
    ) {
        let spec = CutoffSpec::new(r0, delta, lambda, 0.0, vec![0.0]).unwrap();
        let rt = spec.radius(t);
        prop_assert_eq!(cutoff(&spec, t, frac * rt), 1.0);
        prop_assert_eq!(cutoff(&spec, t, (1.0 + delta) * rt * (1.0 + 1e-12) + frac + 1e-9), 0.0);
    }

    #[test]
    fn wasserstein_agrees_with_exhaustive_matching(
        n in 1usize..=6,
        seed in 0u64..10_000,
    ) {
        use rand::Rng;
        let mut rng = sgdlab_core::rng::trajectory_stream(seed, 0);
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
        let fast = wasserstein2_1d(&a, &b).unwrap();
        let slow = w2_exhaustive(&a, &b);
        prop_assert!((fast - slow).abs() <= 1e-10 * (1.0 + slow));
    }

    #[test]
    fn moment_norm_at_k0_is_total_variation(
        ws in proptest::collection::vec(-5.0f64..5.0, 1..20),
    ) {
        let pts: Vec<f64> = ws.iter().enumerate().map(|(i, _)| i as f64).collect();
        let tv: f64 = ws.iter().map(|w| w.abs()).sum();
        let m0 = moment_norm_weighted(&pts, 1, &ws, 0.0);
        prop_assert!((m0 - tv).abs() <= 1e-12 * (1.0 + tv));
    }

    #[test]
    fn psd_sqrt_roundtrip_on_random_psd(
        dim in 1usize..=6,
        seed in 0u64..10_000,
    ) {
        use rand::Rng;
        let mut rng = sgdlab_core::rng::trajectory_stream(seed, 1);
        let a = nalgebra::DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-2.0f64..2.0));
        let q = &a * a.transpose();
        let tol = 1e-12 * (1.0 + q.trace().abs());
        let s = sgdlab_core::model::matrix_sqrt_psd(&q, tol).unwrap();
        let err = linalg::fro_norm(&(&s * s.transpose() - &q));
        prop_assert!(err <= 1e-9 * linalg::fro_norm(&q).max(1e-30));
    }
}
