//! Small dense linear-algebra helpers shared across modules.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Maximum absolute asymmetry `max_ij |A_ij - A_ji|`.
pub fn max_asymmetry(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut m = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            m = m.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    m
}

/// Overwrite `a` with its symmetric part `(A + A^T)/2`.
pub fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let s = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = s;
            a[(j, i)] = s;
        }
    }
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = a.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(|x, y| x.partial_cmp(y).unwrap());
    ev
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn sym_min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(a).first().copied().unwrap_or(0.0)
}

/// Symmetric PSD square root: returns symmetric `S` with `S S^T = Q`.
///
/// Eigenvalues in `[-tol, 0)` are treated as exact zeros; an eigenvalue below
/// `-tol` means the input is not PSD and is reported as an error. `Q` itself
/// must be symmetric within `tol`.
pub fn sym_sqrt_psd(q: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    let asym = max_asymmetry(q);
    if asym > tol.max(1e-12) {
        return Err(Error::NotSymmetric { asym, tol });
    }
    let n = q.nrows();
    let mut s = DMatrix::zeros(n, n);
    sym_sqrt_psd_into(q, tol, &mut s)?;
    Ok(s)
}

/// In-place variant of [`sym_sqrt_psd`] with closed forms for 1x1 and 2x2.
///
/// Skips the symmetry test; the caller must pass a symmetrized matrix.
pub fn sym_sqrt_psd_into(q: &DMatrix<f64>, tol: f64, out: &mut DMatrix<f64>) -> Result<()> {
    let n = q.nrows();
    match n {
        1 => {
            let v = q[(0, 0)];
            if v < -tol {
                return Err(Error::NotPsd { eigenvalue: v, tol });
            }
            out[(0, 0)] = if v > 0.0 { v.sqrt() } else { 0.0 };
            Ok(())
        }
        2 => {
            let (a, b, c) = (q[(0, 0)], q[(0, 1)], q[(1, 1)]);
            let tr = a + c;
            let disc = (0.25 * (a - c) * (a - c) + b * b).sqrt();
            let l1 = 0.5 * tr - disc;
            let l2 = 0.5 * tr + disc;
            if l1 < -tol {
                return Err(Error::NotPsd { eigenvalue: l1, tol });
            }
            let (s1, s2) = (clamped_sqrt(l1), clamped_sqrt(l2));
            // Eigenvector for l2: (b, l2 - a) unless b == 0.
            if b.abs() < 1e-300 {
                out[(0, 0)] = if a >= c { s2 } else { s1 };
                out[(1, 1)] = if a >= c { s1 } else { s2 };
                out[(0, 1)] = 0.0;
                out[(1, 0)] = 0.0;
            } else {
                let (vx, vy) = (b, l2 - a);
                let nrm = (vx * vx + vy * vy).sqrt();
                let (ux, uy) = (vx / nrm, vy / nrm);
                // S = s2 * u u^T + s1 * (I - u u^T)
                out[(0, 0)] = s1 + (s2 - s1) * ux * ux;
                out[(1, 1)] = s1 + (s2 - s1) * uy * uy;
                let off = (s2 - s1) * ux * uy;
                out[(0, 1)] = off;
                out[(1, 0)] = off;
            }
            Ok(())
        }
        _ => {
            let eig = q.clone().symmetric_eigen();
            let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
            if min < -tol {
                return Err(Error::NotPsd {
                    eigenvalue: min,
                    tol,
                });
            }
            out.fill(0.0);
            for k in 0..n {
                let s = clamped_sqrt(eig.eigenvalues[k]);
                if s == 0.0 {
                    continue;
                }
                let v = eig.eigenvectors.column(k);
                for i in 0..n {
                    for j in 0..n {
                        out[(i, j)] += s * v[i] * v[j];
                    }
                }
            }
            Ok(())
        }
    }
}

fn clamped_sqrt(l: f64) -> f64 {
    if l > 0.0 {
        l.sqrt()
    } else {
        0.0
    }
}

/// Clamp small negative eigenvalues of a symmetric matrix to zero.
pub fn clamp_psd(a: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let n = a.nrows();
    let eig = a.clone().symmetric_eigen();
    let mut out = DMatrix::zeros(n, n);
    for k in 0..n {
        let l = if eig.eigenvalues[k] < tol { 0.0 } else { eig.eigenvalues[k] };
        if l == 0.0 {
            continue;
        }
        let v = eig.eigenvectors.column(k);
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] += l * v[i] * v[j];
            }
        }
    }
    symmetrize(&mut out);
    out
}

/// Solve a tridiagonal system with the Thomas algorithm.
///
/// `lower[0]` and `upper[n-1]` are ignored. Returns an error on a vanishing
/// pivot (the schemes that use this produce diagonally dominant systems).
pub fn solve_tridiagonal(
    lower: &[f64],
    diag: &[f64],
    upper: &[f64],
    rhs: &[f64],
) -> Result<Vec<f64>> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut piv = diag[0];
    if piv.abs() < 1e-300 {
        return Err(Error::LinearSolve("zero pivot in tridiagonal solve".into()));
    }
    c[0] = upper[0] / piv;
    d[0] = rhs[0] / piv;
    for i in 1..n {
        piv = diag[i] - lower[i] * c[i - 1];
        if piv.abs() < 1e-300 {
            return Err(Error::LinearSolve("zero pivot in tridiagonal solve".into()));
        }
        if i + 1 < n {
            c[i] = upper[i] / piv;
        }
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / piv;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    Ok(x)
}

/// Dense matrix exponential of a symmetric matrix via eigendecomposition.
pub fn sym_expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let eig = a.clone().symmetric_eigen();
    let mut out = DMatrix::zeros(n, n);
    for k in 0..n {
        let e = eig.eigenvalues[k].exp();
        let v = eig.eigenvectors.column(k);
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] += e * v[i] * v[j];
            }
        }
    }
    out
}

/// Frobenius norm.
pub fn fro_norm(a: &DMatrix<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Euclidean norm of a slice.
pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Dot product of two slices.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn to_dvector(x: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(x)
}
