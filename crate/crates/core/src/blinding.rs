//! Construction of the blinded sample: retained columns are kept exactly,
//! the rest are replaced by nearest-neighbor conditional-mean estimates
//! built from the retained coordinates only. For Gaussian models the
//! population analogue is exact and linear.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::knn::{subset_view, Estimator, Metric, MetricKind, NeighborConfig, NeighborTable, RSelect};
use crate::linalg::{chol_solve, cholesky};
use crate::matrix::{DataMatrix, SymMatrix};

/// A strictly increasing set of retained column indices (0-based).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SubsetIndex(Vec<usize>);

impl SubsetIndex {
    pub fn new(indices: Vec<usize>) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::invalid_argument("empty subset"));
        }
        if !indices.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::invalid_argument(
                "subset indices must be strictly increasing",
            ));
        }
        Ok(SubsetIndex(indices))
    }

    /// Sorts and deduplicates before constructing.
    pub fn from_unsorted(mut indices: Vec<usize>) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        Self::new(indices)
    }

    pub fn full(p: usize) -> Self {
        SubsetIndex((0..p).collect())
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0.binary_search(&i).is_ok()
    }

    /// Validates the indices against a matrix with p columns.
    pub fn check_against(&self, p: usize) -> Result<()> {
        match self.0.last() {
            Some(&last) if last >= p => Err(Error::invalid_argument(format!(
                "subset index {last} out of range for p = {p}"
            ))),
            _ => Ok(()),
        }
    }

    /// 1-based indices, the convention used in reports.
    pub fn one_based(&self) -> Vec<usize> {
        self.0.iter().map(|&i| i + 1).collect()
    }
}

impl std::fmt::Display for SubsetIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{{{}}}",
            self.one_based()
                .iter()
                .map(|i| i.to_string())
                .collect::<Vec<_>>()
                .join(",")
        )
    }
}

/// The blinded sample Y^I together with the estimator settings that
/// produced it. Columns in the subset are bit-identical to the source.
#[derive(Debug, Clone)]
pub struct BlindedSample {
    pub values: Array2<f64>,
    pub subset: SubsetIndex,
    /// (column, resolved r) for every column outside the subset.
    pub r_used: Vec<(usize, usize)>,
    pub metric: MetricKind,
    pub estimator: Estimator,
}

/// Mean vector plus positive-definite covariance; the population-mode
/// input where conditional expectations are exactly linear.
#[derive(Debug, Clone)]
pub struct GaussianModel {
    pub mean: Vec<f64>,
    pub cov: SymMatrix,
}

impl GaussianModel {
    pub fn new(mean: Vec<f64>, cov: SymMatrix) -> Result<Self> {
        if mean.len() != cov.dim() {
            return Err(Error::invalid_data(format!(
                "mean length {} does not match covariance dim {}",
                mean.len(),
                cov.dim()
            )));
        }
        if cholesky(&cov).is_none() {
            return Err(Error::invalid_data(
                "model covariance is not positive definite",
            ));
        }
        Ok(GaussianModel { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.cov.dim()
    }
}

/// Builds the blinded sample: Y[:, i] = X[:, i] for i in the subset, and
/// the nearest-neighbor estimate of E(X[i] | X[subset]) otherwise.
/// With `cfg.r = Auto`, r is chosen per column by GCV over `cfg`'s grid.
pub fn blind(
    x: &DataMatrix,
    subset: &SubsetIndex,
    cfg: &NeighborConfig,
    metric_kind: MetricKind,
) -> Result<BlindedSample> {
    subset.check_against(x.n_cols())?;
    let n = x.n_rows();
    let p = x.n_cols();
    let others: Vec<usize> = (0..p).filter(|i| !subset.contains(*i)).collect();

    let mut values = x.values().to_owned();
    let mut r_used = Vec::with_capacity(others.len());

    if !others.is_empty() {
        let metric = Metric::resolve(metric_kind, x, subset.indices())?;
        let z = subset_view(x, subset.indices());

        let grid: Vec<usize> = match &cfg.r {
            RSelect::Fixed(r) => {
                if *r < 1 || *r > n {
                    return Err(Error::invalid_argument(format!(
                        "r = {r} outside [1, {n}]"
                    )));
                }
                vec![*r]
            }
            RSelect::Auto => cfg.grid_for(n)?,
        };
        let r_max = grid.iter().copied().filter(|&r| r < n).max().unwrap_or(0);
        let table = NeighborTable::build(z.view(), &metric, cfg.include_self, r_max.max(1));

        for &i in &others {
            let column: Vec<f64> = x.column(i).iter().copied().collect();
            let (crit, est) = table.estimates_over_grid(&column, &grid, cfg.estimator);
            let g_best = match &cfg.r {
                RSelect::Fixed(_) => 0,
                RSelect::Auto => {
                    let mut best = 0;
                    for g in 1..grid.len() {
                        if crit[g] < crit[best] {
                            best = g;
                        }
                    }
                    best
                }
            };
            r_used.push((i, grid[g_best]));
            for j in 0..n {
                values[(j, i)] = est[(g_best, j)];
            }
        }
    }

    Ok(BlindedSample {
        values,
        subset: subset.clone(),
        r_used,
        metric: metric_kind,
        estimator: cfg.estimator,
    })
}

/// Population blinded covariance for a Gaussian model: with A the matrix
/// that keeps the subset coordinates and maps each other coordinate i to
/// the linear regression Sigma[i, I] Sigma[I, I]^-1 X[I], returns
/// A Sigma A'. This is the covariance of (X[I], E(X[i] | X[I]), i not in I).
pub fn blind_population_gaussian(model: &GaussianModel, subset: &SubsetIndex) -> Result<SymMatrix> {
    let p = model.dim();
    subset.check_against(p)?;
    let idx = subset.indices();
    let sigma = &model.cov;

    let s_ii = sigma.submatrix(idx);
    let l = cholesky(&s_ii).ok_or_else(|| {
        Error::numeric("covariance restricted to the subset is singular")
    })?;

    // rows of A, stored as coefficient vectors over the subset coordinates
    let d = idx.len();
    let mut coef = Array2::<f64>::zeros((p, d));
    for i in 0..p {
        if let Some(pos) = idx.iter().position(|&k| k == i) {
            coef[(i, pos)] = 1.0;
        } else {
            let b = Array1::from_iter(idx.iter().map(|&k| sigma.get(i, k)));
            let w = chol_solve(&l, &b);
            coef.row_mut(i).assign(&w);
        }
    }

    // (A Sigma A')_{ij} = coef_i' Sigma_II coef_j  (valid for all i, j since
    // the subset rows are unit vectors on the subset block)
    let s_ii_arr = s_ii.to_array();
    let tmp = coef.dot(&s_ii_arr); // p x d
    SymMatrix::from_fn(p, |i, j| tmp.row(i).dot(&coef.row(j)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;

    #[test]
    fn subset_rejects_duplicates_and_disorder() {
        assert!(SubsetIndex::new(vec![1, 1]).is_err());
        assert!(SubsetIndex::new(vec![2, 1]).is_err());
        assert!(SubsetIndex::new(vec![]).is_err());
        assert_eq!(
            SubsetIndex::from_unsorted(vec![2, 0, 2]).unwrap().indices(),
            &[0, 2]
        );
    }

    #[test]
    fn blind_full_subset_is_identity() {
        let x = DataMatrix::new(array![
            [1.0, 2.0, 3.0],
            [4.0, 5.0, 6.0],
            [7.0, 8.0, 9.5]
        ])
        .unwrap();
        let b = blind(
            &x,
            &SubsetIndex::full(3),
            &NeighborConfig::default(),
            MetricKind::Euclidean,
        )
        .unwrap();
        assert_eq!(b.values, x.values().to_owned());
        assert!(b.r_used.is_empty());
    }

    #[test]
    fn blind_r1_distinct_rows_is_identity() {
        let x = DataMatrix::new(array![
            [0.0, 2.0],
            [1.0, 5.0],
            [3.0, 6.0],
            [9.0, 1.0]
        ])
        .unwrap();
        let cfg = NeighborConfig {
            r: RSelect::Fixed(1),
            ..Default::default()
        };
        let b = blind(
            &x,
            &SubsetIndex::new(vec![0]).unwrap(),
            &cfg,
            MetricKind::Euclidean,
        )
        .unwrap();
        assert_eq!(b.values, x.values().to_owned());
        assert_eq!(b.r_used, vec![(1, 1)]);
    }

    #[test]
    fn blind_preserves_subset_columns_bitwise() {
        let x = DataMatrix::new(array![
            [0.1, 2.0, -1.0],
            [1.3, 5.0, 0.5],
            [3.7, 6.0, 2.25],
            [9.2, 1.0, -3.5]
        ])
        .unwrap();
        let subset = SubsetIndex::new(vec![1]).unwrap();
        let b = blind(
            &x,
            &subset,
            &NeighborConfig::leave_one_out(),
            MetricKind::Euclidean,
        )
        .unwrap();
        for j in 0..4 {
            assert_eq!(b.values[(j, 1)], x.values()[(j, 1)]);
        }
        assert_eq!(b.r_used.len(), 2);
    }

    #[test]
    fn population_two_variable_regression() {
        // Sigma = [[1, rho], [rho, 1]], I = {0} -> [[1, rho], [rho, rho^2]]
        let rho = 0.6;
        let model = GaussianModel::new(
            vec![0.0, 0.0],
            SymMatrix::new(array![[1.0, rho], [rho, 1.0]]).unwrap(),
        )
        .unwrap();
        let sy = blind_population_gaussian(&model, &SubsetIndex::new(vec![0]).unwrap()).unwrap();
        assert_relative_eq!(sy.get(0, 0), 1.0, epsilon = 1e-14);
        assert_relative_eq!(sy.get(0, 1), rho, epsilon = 1e-14);
        assert_relative_eq!(sy.get(1, 1), rho * rho, epsilon = 1e-14);
    }

    #[test]
    fn population_full_subset_returns_sigma() {
        let cov = SymMatrix::new(array![[2.0, 0.3], [0.3, 1.5]]).unwrap();
        let model = GaussianModel::new(vec![0.0, 0.0], cov.clone()).unwrap();
        let sy = blind_population_gaussian(&model, &SubsetIndex::full(2)).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_relative_eq!(sy.get(i, j), cov.get(i, j), epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn population_output_is_psd() {
        let cov = SymMatrix::new(array![
            [2.0, 0.3, 0.5],
            [0.3, 1.5, -0.2],
            [0.5, -0.2, 1.0]
        ])
        .unwrap();
        let model = GaussianModel::new(vec![0.0; 3], cov).unwrap();
        let sy = blind_population_gaussian(&model, &SubsetIndex::new(vec![1]).unwrap()).unwrap();
        let e = crate::pca::eigendecompose(&sy).unwrap();
        for &l in &e.eigenvalues {
            assert!(l > -1e-10, "eigenvalue {l} negative");
        }
    }
}
