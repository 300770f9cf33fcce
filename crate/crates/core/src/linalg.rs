//! Dense helpers for the small `p x p` normal-equation systems used by the GLM fits.
//! Matrices are row-major `Vec<f64>` of length `p * p`.

/// Relative pivot tolerance for declaring a column dependent.
const PIVOT_TOL: f64 = 1e-10;

/// Lower Cholesky factor of a symmetric positive definite matrix.
/// On failure returns the index of the first column that is (numerically)
/// a linear combination of the earlier ones.
pub(crate) fn cholesky(a: &[f64], p: usize) -> Result<Vec<f64>, usize> {
    debug_assert_eq!(a.len(), p * p);
    let mut l = vec![0.0; p * p];
    for j in 0..p {
        let mut d = a[j * p + j];
        for k in 0..j {
            d -= l[j * p + k] * l[j * p + k];
        }
        let scale = a[j * p + j].abs().max(f64::MIN_POSITIVE);
        if !d.is_finite() || d <= PIVOT_TOL * scale {
            return Err(j);
        }
        let d = d.sqrt();
        l[j * p + j] = d;
        for i in (j + 1)..p {
            let mut v = a[i * p + j];
            for k in 0..j {
                v -= l[i * p + k] * l[j * p + k];
            }
            l[i * p + j] = v / d;
        }
    }
    Ok(l)
}

/// Solve `L L^T x = b`.
pub(crate) fn chol_solve(l: &[f64], p: usize, b: &[f64]) -> Vec<f64> {
    let mut z = b.to_vec();
    for i in 0..p {
        for k in 0..i {
            z[i] -= l[i * p + k] * z[k];
        }
        z[i] /= l[i * p + i];
    }
    for i in (0..p).rev() {
        for k in (i + 1)..p {
            z[i] -= l[k * p + i] * z[k];
        }
        z[i] /= l[i * p + i];
    }
    z
}

/// Inverse of `L L^T`.
pub(crate) fn chol_inverse(l: &[f64], p: usize) -> Vec<f64> {
    let mut inv = vec![0.0; p * p];
    let mut e = vec![0.0; p];
    for j in 0..p {
        e.iter_mut().for_each(|v| *v = 0.0);
        e[j] = 1.0;
        let col = chol_solve(l, p, &e);
        for i in 0..p {
            inv[i * p + j] = col[i];
        }
    }
    inv
}

/// Inverse of a small symmetric positive definite matrix.
pub(crate) fn spd_inverse(a: &[f64], p: usize) -> Result<Vec<f64>, usize> {
    cholesky(a, p).map(|l| chol_inverse(&l, p))
}
