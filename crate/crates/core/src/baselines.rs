//! Jolliffe's B2 and B4 variable-selection rules, used as comparison
//! baselines in the simulation studies.
//!
//! Both rules associate variables to principal components by largest
//! absolute loading. B2 walks the trailing components and deletes the
//! dominating variable of each; B4 walks the leading components and
//! retains the dominating variable of each. Already-assigned variables are
//! skipped; loading ties resolve to the lowest index.

use crate::blinding::SubsetIndex;
use crate::error::{Error, Result};
use crate::matrix::DataMatrix;
use crate::pca::{covariance, eigendecompose, EigenSystem};

fn argmax_loading(eig: &EigenSystem, k: usize, taken: &[bool]) -> usize {
    let v = eig.eigenvector(k);
    let mut best: Option<usize> = None;
    for i in 0..v.len() {
        if taken[i] {
            continue;
        }
        match best {
            None => best = Some(i),
            Some(b) => {
                if v[i].abs() > v[b].abs() {
                    best = Some(i);
                }
            }
        }
    }
    best.expect("fewer than p variables taken")
}

/// B2: delete the dominating variable of each of the last p - keep
/// components, starting from the smallest eigenvalue; return the survivors.
pub fn b2(x: &DataMatrix, keep: usize) -> Result<SubsetIndex> {
    let p = x.n_cols();
    if keep < 1 || keep >= p {
        return Err(Error::invalid_argument(format!(
            "keep = {keep} out of range [1, {})",
            p
        )));
    }
    let eig = eigendecompose(&covariance(x))?;
    let mut deleted = vec![false; p];
    for k in (keep..p).rev() {
        let victim = argmax_loading(&eig, k, &deleted);
        deleted[victim] = true;
    }
    SubsetIndex::new((0..p).filter(|&i| !deleted[i]).collect())
}

/// B4: retain the dominating variable of each of the first keep components.
pub fn b4(x: &DataMatrix, keep: usize) -> Result<SubsetIndex> {
    let p = x.n_cols();
    if keep < 1 || keep > p {
        return Err(Error::invalid_argument(format!(
            "keep = {keep} out of range [1, {p}]"
        )));
    }
    let eig = eigendecompose(&covariance(x))?;
    let mut taken = vec![false; p];
    for k in 0..keep {
        let kept = argmax_loading(&eig, k, &taken);
        taken[kept] = true;
    }
    SubsetIndex::new((0..p).filter(|&i| taken[i]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    /// Sample with (population) covariance approximately diag(4, 3, 0.1).
    fn diag_sample() -> DataMatrix {
        let mut rng = ChaCha12Rng::seed_from_u64(99);
        let n = 400;
        let mut values = Array2::zeros((n, 3));
        for j in 0..n {
            // crude uniform-based noise is fine here, only scales matter
            values[(j, 0)] = 2.0 * (rng.random::<f64>() - 0.5) * 3.46;
            values[(j, 1)] = 1.7320508 * (rng.random::<f64>() - 0.5) * 3.46;
            values[(j, 2)] = 0.3162 * (rng.random::<f64>() - 0.5) * 3.46;
        }
        DataMatrix::new(values).unwrap()
    }

    #[test]
    fn b2_deletes_trailing_variable() {
        let x = diag_sample();
        let kept = b2(&x, 2).unwrap();
        assert_eq!(kept.indices(), &[0, 1]);
    }

    #[test]
    fn b4_keeps_leading_variables() {
        let x = diag_sample();
        let kept = b4(&x, 2).unwrap();
        assert_eq!(kept.indices(), &[0, 1]);
    }

    #[test]
    fn b4_keep_p_is_everything() {
        let x = diag_sample();
        assert_eq!(b4(&x, 3).unwrap().indices(), &[0, 1, 2]);
    }

    #[test]
    fn outputs_have_exact_cardinality_no_duplicates() {
        let x = diag_sample();
        for keep in 1..3 {
            assert_eq!(b2(&x, keep).unwrap().len(), keep);
            assert_eq!(b4(&x, keep).unwrap().len(), keep);
        }
    }

    #[test]
    fn identity_covariance_is_deterministic() {
        // near-tied loadings: the tie rule must give a stable answer
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let n = 50;
        let mut values = Array2::zeros((n, 3));
        for j in 0..n {
            for i in 0..3 {
                values[(j, i)] = rng.random::<f64>() - 0.5;
            }
        }
        let x = DataMatrix::new(values).unwrap();
        let a = b2(&x, 2).unwrap();
        let b = b2(&x, 2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rescaling_leaves_selection_fixed() {
        let x = diag_sample();
        let scaled = DataMatrix::new(x.values().mapv(|v| 3.5 * v)).unwrap();
        assert_eq!(b2(&x, 2).unwrap(), b2(&scaled, 2).unwrap());
        assert_eq!(b4(&x, 2).unwrap(), b4(&scaled, 2).unwrap());
    }
}
