//! Small dense helpers: Cholesky factorization and triangular solves.
//!
//! Everything here operates on matrices of at most a few dozen rows, so a
//! plain O(d^3) implementation is all that is needed.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::matrix::SymMatrix;

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
/// Returns `None` when a pivot is not strictly positive.
pub(crate) fn cholesky(s: &SymMatrix) -> Option<Array2<f64>> {
    let d = s.dim();
    let mut l = Array2::<f64>::zeros((d, d));
    for i in 0..d {
        for j in 0..=i {
            let mut sum = s.get(i, j);
            for k in 0..j {
                sum -= l[(i, k)] * l[(j, k)];
            }
            if i == j {
                if sum <= 0.0 || !sum.is_finite() {
                    return None;
                }
                l[(i, i)] = sum.sqrt();
            } else {
                l[(i, j)] = sum / l[(j, j)];
            }
        }
    }
    Some(l)
}

/// Solves S x = b given the Cholesky factor L of S.
pub(crate) fn chol_solve(l: &Array2<f64>, b: &Array1<f64>) -> Array1<f64> {
    let d = l.nrows();
    let mut y = Array1::<f64>::zeros(d);
    for i in 0..d {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[(i, k)] * y[k];
        }
        y[i] = sum / l[(i, i)];
    }
    let mut x = Array1::<f64>::zeros(d);
    for i in (0..d).rev() {
        let mut sum = y[i];
        for k in (i + 1)..d {
            sum -= l[(k, i)] * x[k];
        }
        x[i] = sum / l[(i, i)];
    }
    x
}

/// Inverse of a symmetric positive-definite matrix via Cholesky.
///
/// When the factorization fails, a ridge of `1e-10 * trace / d` is added to
/// the diagonal and the factorization retried once.
pub(crate) fn spd_inverse_with_ridge(s: &SymMatrix) -> Result<Array2<f64>> {
    let d = s.dim();
    let l = match cholesky(s) {
        Some(l) => l,
        None => {
            let trace: f64 = (0..d).map(|i| s.get(i, i)).sum();
            let ridge = 1e-10 * trace / d as f64;
            let ridged = SymMatrix::from_fn(d, |i, j| {
                s.get(i, j) + if i == j { ridge } else { 0.0 }
            })?;
            cholesky(&ridged).ok_or_else(|| {
                Error::numeric("matrix not positive definite even after ridging")
            })?
        }
    };
    let mut inv = Array2::<f64>::zeros((d, d));
    for j in 0..d {
        let mut e = Array1::<f64>::zeros(d);
        e[j] = 1.0;
        let col = chol_solve(&l, &e);
        inv.column_mut(j).assign(&col);
    }
    // symmetrize away round-off
    for i in 0..d {
        for j in (i + 1)..d {
            let v = 0.5 * (inv[(i, j)] + inv[(j, i)]);
            inv[(i, j)] = v;
            inv[(j, i)] = v;
        }
    }
    Ok(inv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;

    #[test]
    fn cholesky_solves() {
        let s = SymMatrix::new(array![[4.0, 2.0], [2.0, 3.0]]).unwrap();
        let l = cholesky(&s).unwrap();
        let x = chol_solve(&l, &array![8.0, 7.0]);
        // 4x + 2y = 8, 2x + 3y = 7 -> x = 1.25, y = 1.5
        assert_relative_eq!(x[0], 1.25, epsilon = 1e-12);
        assert_relative_eq!(x[1], 1.5, epsilon = 1e-12);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let s = SymMatrix::new(array![[1.0, 2.0], [2.0, 1.0]]).unwrap();
        assert!(cholesky(&s).is_none());
    }

    #[test]
    fn inverse_matches_identity() {
        let s = SymMatrix::new(array![[2.0, 0.5], [0.5, 1.0]]).unwrap();
        let inv = spd_inverse_with_ridge(&s).unwrap();
        let prod = s.to_array().dot(&inv);
        assert_relative_eq!(prod[(0, 0)], 1.0, epsilon = 1e-10);
        assert_relative_eq!(prod[(0, 1)], 0.0, epsilon = 1e-10);
    }
}
