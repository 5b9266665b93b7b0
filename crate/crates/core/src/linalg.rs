//! Thin wrappers over nalgebra for the small dense systems used by the
//! nuisance fits.

use nalgebra::{DMatrix, DVector};

use crate::error::{DolceError, Result};

/// Solves `a x = b` for symmetric positive definite `a`.
///
/// Falls back to LU when the Cholesky factorization fails.
pub fn solve_spd(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(ch) = a.clone().cholesky() {
        return Ok(ch.solve(b));
    }
    a.clone()
        .lu()
        .solve(b)
        .ok_or_else(|| DolceError::Numeric("singular linear system".into()))
}

pub fn solve_spd_vec(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if let Some(ch) = a.clone().cholesky() {
        return Ok(ch.solve(b));
    }
    a.clone()
        .lu()
        .solve(b)
        .ok_or_else(|| DolceError::Numeric("singular linear system".into()))
}

/// Inverse of a symmetric positive definite matrix.
pub fn inverse_spd(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    solve_spd(a, &DMatrix::identity(n, n))
}

/// `X^T X` and `X^T y` for `X` given as row slices with an implicit leading 1.
///
/// Returns the `(p+1) x (p+1)` Gram matrix and `(p+1) x t` cross product.
pub fn gram_with_intercept<'a, I>(rows: I, p: usize, targets: &[&[f64]]) -> (DMatrix<f64>, DMatrix<f64>)
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let t = targets.len();
    let mut g = DMatrix::<f64>::zeros(p + 1, p + 1);
    let mut c = DMatrix::<f64>::zeros(p + 1, t);
    let mut xt = vec![0.0; p + 1];
    for (i, row) in rows.into_iter().enumerate() {
        xt[0] = 1.0;
        xt[1..].copy_from_slice(row);
        for a in 0..=p {
            let va = xt[a];
            if va == 0.0 {
                continue;
            }
            for b in a..=p {
                g[(a, b)] += va * xt[b];
            }
            for (k, y) in targets.iter().enumerate() {
                c[(a, k)] += va * y[i];
            }
        }
    }
    for a in 0..=p {
        for b in 0..a {
            g[(a, b)] = g[(b, a)];
        }
    }
    (g, c)
}
