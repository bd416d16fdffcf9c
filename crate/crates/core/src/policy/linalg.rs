use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{check_dim, PolexError, Result};

/// Relative tolerance for symmetry and for clamping negative eigenvalues.
pub const PSD_TOLERANCE: f64 = 1e-10;

/// Principal square root of a symmetric positive semidefinite matrix.
///
/// `m` is a row-major `d x d` matrix. The result `S` is symmetric, `S >= 0`
/// and `S * S = M`. Eigenvalues in `[-1e-10 ||M||, 0)` are clamped to zero;
/// anything more negative is rejected.
pub fn psd_sqrt(m: &[f64], d: usize) -> Result<Vec<f64>> {
    check_dim("psd_sqrt input", d * d, m.len())?;
    if m.iter().any(|v| !v.is_finite()) {
        return Err(PolexError::Domain("psd_sqrt of a non-finite matrix".into()));
    }
    let norm = m.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Ok(vec![0.0; d * d]);
    }
    let tolerance = PSD_TOLERANCE * norm;
    if d == 1 {
        return if m[0] < -tolerance {
            Err(PolexError::NotPsd {
                eigenvalue: m[0],
                tolerance,
            })
        } else {
            Ok(vec![m[0].max(0.0).sqrt()])
        };
    }

    let mat = DMatrix::from_row_slice(d, d, m);
    for i in 0..d {
        for j in (i + 1)..d {
            if (mat[(i, j)] - mat[(j, i)]).abs() > tolerance {
                return Err(PolexError::Domain(format!(
                    "psd_sqrt input is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    let sym = (&mat + mat.transpose()) * 0.5;
    let eigen = SymmetricEigen::new(sym);
    let mut roots = eigen.eigenvalues.clone();
    for lambda in roots.iter_mut() {
        if *lambda < -tolerance {
            return Err(PolexError::NotPsd {
                eigenvalue: *lambda,
                tolerance,
            });
        }
        *lambda = lambda.max(0.0).sqrt();
    }
    let q = &eigen.eigenvectors;
    let s = q * DMatrix::from_diagonal(&roots) * q.transpose();
    let s = (&s + s.transpose()) * 0.5;

    let mut out = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            out[i * d + j] = s[(i, j)];
        }
    }
    Ok(out)
}

/// Row-major `A * A^T` for a square `d x d` matrix, accumulated into `out`
/// with weight `w`.
pub(crate) fn add_outer_square(a: &[f64], d: usize, w: f64, out: &mut [f64]) {
    for i in 0..d {
        for j in 0..d {
            let mut acc = 0.0;
            for k in 0..d {
                acc += a[i * d + k] * a[j * d + k];
            }
            out[i * d + j] += w * acc;
        }
    }
}

pub(crate) fn mat_vec(a: &[f64], rows: usize, cols: usize, v: &[f64], out: &mut [f64]) {
    for i in 0..rows {
        out[i] = a[i * cols..(i + 1) * cols]
            .iter()
            .zip(v)
            .map(|(x, y)| x * y)
            .sum();
    }
}
