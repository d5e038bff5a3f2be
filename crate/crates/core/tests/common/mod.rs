//! Shared test oracles, independent of the library implementation paths they
//! check.
#![allow(dead_code)] // not every suite uses every oracle

/// Brute-force 1D 2-Wasserstein distance between equal-weight samples:
/// the minimum over all perfect matchings of the root mean squared pairing
/// cost.
pub fn w2_exhaustive(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = b.len();
    let mut idx: Vec<usize> = (0..n).collect();
    let mut best = f64::INFINITY;
    permute(&mut idx, 0, &mut |perm| {
        let cost: f64 = a
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let d = x - b[perm[i]];
                d * d
            })
            .sum();
        if cost < best {
            best = cost;
        }
    });
    (best / n as f64).sqrt()
}

fn permute(idx: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == idx.len() {
        visit(idx);
        return;
    }
    for i in k..idx.len() {
        idx.swap(k, i);
        permute(idx, k + 1, visit);
        idx.swap(k, i);
    }
}

/// Central finite-difference gradient of the total loss, step
/// `h = cbrt(machine eps) * max(1, |x_i|)` per coordinate.
pub fn fd_gradient(model: &sgdlab_core::model::LossModel, x: &[f64]) -> Vec<f64> {
    let d = x.len();
    let base = f64::EPSILON.cbrt();
    let mut g = vec![0.0; d];
    for i in 0..d {
        let h = base * x[i].abs().max(1.0);
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[i] += h;
        xm[i] -= h;
        g[i] = (model.value(&xp) - model.value(&xm)) / (2.0 * h);
    }
    g
}
