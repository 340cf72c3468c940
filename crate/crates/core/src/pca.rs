//! Sample covariance and symmetric eigendecomposition.
//!
//! The eigensolver is a cyclic Jacobi sweep. It is unconditionally stable
//! for symmetric matrices and, combined with the deterministic ordering and
//! sign rules below, produces identical output for identical input, which
//! the subset-selection layer relies on.

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{DataMatrix, SymMatrix};

/// Convergence threshold for the Jacobi sweep, relative to the Frobenius
/// norm of the input.
const JACOBI_TOL: f64 = 1e-12;
/// Sweep cap; Jacobi converges quadratically so this is generous.
const MAX_SWEEPS: usize = 100;
/// Adjacent eigenvalue gaps below `DEGENERATE_GAP * lambda_1` flag the
/// system as degenerate: eigenvectors are then only defined up to rotation
/// within the near-tied eigenspace.
pub const DEGENERATE_GAP: f64 = 1e-10;

/// Eigenvalues in descending order with unit-norm, sign-canonicalized
/// eigenvectors (one per column).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EigenSystem {
    pub eigenvalues: Vec<f64>,
    /// p x k matrix; column k is the eigenvector for `eigenvalues[k]`.
    #[serde(skip)]
    pub eigenvectors: Array2<f64>,
    /// Set when an adjacent eigenvalue gap is below `DEGENERATE_GAP * lambda_1`.
    pub degenerate: bool,
}

impl EigenSystem {
    pub fn dim(&self) -> usize {
        self.eigenvectors.nrows()
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn eigenvector(&self, k: usize) -> ArrayView1<'_, f64> {
        self.eigenvectors.column(k)
    }

    /// Keeps the first q eigenpairs.
    pub fn truncated(&self, q: usize) -> EigenSystem {
        EigenSystem {
            eigenvalues: self.eigenvalues[..q].to_vec(),
            eigenvectors: self.eigenvectors.slice(ndarray::s![.., ..q]).to_owned(),
            degenerate: self.degenerate,
        }
    }

    /// Fraction of total variance carried by the first q eigenvalues.
    pub fn explained_variance_ratio(&self, q: usize) -> f64 {
        let total: f64 = self.eigenvalues.iter().sum();
        if total <= 0.0 {
            return 0.0;
        }
        self.eigenvalues[..q.min(self.len())].iter().sum::<f64>() / total
    }

    /// Number of eigenvalues above `DEGENERATE_GAP * lambda_1`; trailing
    /// components beyond this carry no information about the input.
    pub fn numerical_rank(&self) -> usize {
        let lead = self.eigenvalues.first().copied().unwrap_or(0.0).max(0.0);
        let tol = DEGENERATE_GAP * lead;
        self.eigenvalues.iter().filter(|&&l| l > tol).count()
    }
}

/// Centered second-moment matrix with 1/n normalization.
///
/// The 1/n convention (rather than 1/(n-1)) matches the estimator whose
/// convergence the blinding analysis establishes; eigenvectors, which is
/// all the objective consumes, are identical under either normalizer.
pub fn covariance(x: &DataMatrix) -> SymMatrix {
    let n = x.n_rows();
    let p = x.n_cols();
    let values = x.values();
    let means: Vec<f64> = (0..p).map(|j| values.column(j).sum() / n as f64).collect();
    let mut out = vec![0.0; p * p];
    for i in 0..p {
        let ci = values.column(i);
        for j in i..p {
            let cj = values.column(j);
            let mut acc = 0.0;
            for r in 0..n {
                acc += (ci[r] - means[i]) * (cj[r] - means[j]);
            }
            let v = acc / n as f64;
            out[i * p + j] = v;
            out[j * p + i] = v;
        }
    }
    SymMatrix::from_fn(p, |i, j| out[i * p + j]).expect("finite by construction")
}

/// Full eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
pub fn eigendecompose(s: &SymMatrix) -> Result<EigenSystem> {
    let n = s.dim();
    let mut a = s.to_array();
    let mut v = Array2::<f64>::eye(n);
    let tol = JACOBI_TOL * s.fro_norm().max(1.0);

    let mut sweeps = 0;
    loop {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[(p, q)].abs();
            }
        }
        if off <= tol {
            break;
        }
        if sweeps >= MAX_SWEEPS {
            return Err(Error::numeric(format!(
                "Jacobi sweep did not converge after {MAX_SWEEPS} iterations (off-diagonal {off:.3e})"
            )));
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let diff = a[(q, q)] - a[(p, p)];
                let t = if apq.abs() < diff.abs() * 1e-36 {
                    apq / diff
                } else {
                    let theta = 0.5 * diff / apq;
                    let mut t = 1.0 / (theta.abs() + (1.0 + theta * theta).sqrt());
                    if theta < 0.0 {
                        t = -t;
                    }
                    t
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let sn = t * c;
                let tau = sn / (1.0 + c);

                let app = a[(p, p)];
                let aqq = a[(q, q)];
                a[(p, p)] = app - t * apq;
                a[(q, q)] = aqq + t * apq;
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for k in 0..n {
                    if k != p && k != q {
                        let akp = a[(k, p)];
                        let akq = a[(k, q)];
                        let new_kp = akp - sn * (akq + tau * akp);
                        let new_kq = akq + sn * (akp - tau * akq);
                        a[(k, p)] = new_kp;
                        a[(p, k)] = new_kp;
                        a[(k, q)] = new_kq;
                        a[(q, k)] = new_kq;
                    }
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = vkp - sn * (vkq + tau * vkp);
                    v[(k, q)] = vkq + sn * (vkp - tau * vkq);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].total_cmp(&a[(i, i)]).then(i.cmp(&j)));

    let eigenvalues: Vec<f64> = order.iter().map(|&i| a[(i, i)]).collect();
    let mut eigenvectors = Array2::<f64>::zeros((n, n));
    for (k, &i) in order.iter().enumerate() {
        let mut col = v.column(i).to_owned();
        canonicalize_sign(&mut col);
        eigenvectors.column_mut(k).assign(&col);
    }

    let lead = eigenvalues.first().copied().unwrap_or(0.0).abs();
    let degenerate = eigenvalues
        .windows(2)
        .any(|w| (w[0] - w[1]).abs() < DEGENERATE_GAP * lead.max(f64::MIN_POSITIVE));

    Ok(EigenSystem {
        eigenvalues,
        eigenvectors,
        degenerate,
    })
}

/// First q eigenpairs of the sample covariance.
pub fn principal_components(x: &DataMatrix, q: usize) -> Result<EigenSystem> {
    let p = x.n_cols();
    if q < 1 || q > p {
        return Err(Error::invalid_argument(format!(
            "q = {q} out of range [1, {p}]"
        )));
    }
    Ok(eigendecompose(&covariance(x))?.truncated(q))
}

/// Flips the vector so its largest-magnitude coordinate is positive;
/// magnitude ties resolve to the lowest index.
fn canonicalize_sign(v: &mut Array1<f64>) {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.mapv_inplace(|x| -x);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;

    #[test]
    fn covariance_two_point_set() {
        // rows [[1,0],[-1,0]] -> [[1,0],[0,0]]
        let x = DataMatrix::new(array![[1.0, 0.0], [-1.0, 0.0]]).unwrap();
        let s = covariance(&x);
        assert_relative_eq!(s.get(0, 0), 1.0);
        assert_eq!(s.get(0, 1), 0.0);
        assert_eq!(s.get(1, 1), 0.0);
    }

    #[test]
    fn covariance_constant_column_is_zero() {
        let x = DataMatrix::new(array![[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]]).unwrap();
        let s = covariance(&x);
        assert_eq!(s.get(1, 1), 0.0);
        assert_eq!(s.get(0, 1), 0.0);
    }

    #[test]
    fn eigen_diag() {
        let s = SymMatrix::new(array![[3.0, 0.0], [0.0, 1.0]]).unwrap();
        let e = eigendecompose(&s).unwrap();
        assert_relative_eq!(e.eigenvalues[0], 3.0, epsilon = 1e-12);
        assert_relative_eq!(e.eigenvalues[1], 1.0, epsilon = 1e-12);
        assert_relative_eq!(e.eigenvector(0)[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(e.eigenvector(1)[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn eigen_symmetric_pair() {
        // [[2,1],[1,2]] -> eigenvalues (3,1), leading vector (1,1)/sqrt(2)
        let s = SymMatrix::new(array![[2.0, 1.0], [1.0, 2.0]]).unwrap();
        let e = eigendecompose(&s).unwrap();
        assert_relative_eq!(e.eigenvalues[0], 3.0, epsilon = 1e-12);
        assert_relative_eq!(e.eigenvalues[1], 1.0, epsilon = 1e-12);
        let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
        assert_relative_eq!(e.eigenvector(0)[0], inv_sqrt2, epsilon = 1e-10);
        assert_relative_eq!(e.eigenvector(0)[1], inv_sqrt2, epsilon = 1e-10);
    }

    #[test]
    fn eigen_residuals_and_reconstruction() {
        let s = SymMatrix::new(array![
            [4.0, 1.0, 0.5],
            [1.0, 3.0, 0.2],
            [0.5, 0.2, 1.0]
        ])
        .unwrap();
        let e = eigendecompose(&s).unwrap();
        let sm = s.to_array();
        let lead = e.eigenvalues[0].max(1.0);
        let mut recon = Array2::<f64>::zeros((3, 3));
        for k in 0..3 {
            let v = e.eigenvector(k);
            let sv = sm.dot(&v);
            let resid = (&sv - &(&v * e.eigenvalues[k])).mapv(|x| x * x).sum().sqrt();
            assert!(resid <= 1e-8 * lead, "residual {resid} too large for k={k}");
            for i in 0..3 {
                for j in 0..3 {
                    recon[(i, j)] += e.eigenvalues[k] * v[i] * v[j];
                }
            }
        }
        let err = (&recon - &sm).mapv(|x| x * x).sum().sqrt() / sm.mapv(|x| x * x).sum().sqrt();
        assert!(err <= 1e-8, "reconstruction error {err}");
    }

    #[test]
    fn scaling_leaves_vectors_fixed() {
        let s = SymMatrix::new(array![[4.0, 1.0], [1.0, 3.0]]).unwrap();
        let scaled = SymMatrix::new(array![[8.0, 2.0], [2.0, 6.0]]).unwrap();
        let e1 = eigendecompose(&s).unwrap();
        let e2 = eigendecompose(&scaled).unwrap();
        for k in 0..2 {
            assert_relative_eq!(e2.eigenvalues[k], 2.0 * e1.eigenvalues[k], epsilon = 1e-10);
            for i in 0..2 {
                assert_relative_eq!(e2.eigenvector(k)[i], e1.eigenvector(k)[i], epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn repeated_eigenvalues_flagged_not_error() {
        let s = SymMatrix::new(array![[2.0, 0.0], [0.0, 2.0]]).unwrap();
        let e = eigendecompose(&s).unwrap();
        assert!(e.degenerate);
        // still an orthonormal basis
        let dot: f64 = e
            .eigenvector(0)
            .iter()
            .zip(e.eigenvector(1).iter())
            .map(|(a, b)| a * b)
            .sum();
        assert!(dot.abs() < 1e-8);
    }

    #[test]
    fn principal_components_q_equals_p() {
        let x = DataMatrix::new(array![
            [1.0, 2.0],
            [0.5, -1.0],
            [-0.25, 0.3],
            [2.0, 1.0]
        ])
        .unwrap();
        let full = eigendecompose(&covariance(&x)).unwrap();
        let pcs = principal_components(&x, 2).unwrap();
        assert_eq!(pcs.eigenvalues, full.eigenvalues);
    }

    #[test]
    fn principal_components_rejects_bad_q() {
        let x = DataMatrix::new(array![[1.0, 2.0], [0.5, -1.0]]).unwrap();
        assert!(principal_components(&x, 0).is_err());
        assert!(principal_components(&x, 3).is_err());
    }
}
