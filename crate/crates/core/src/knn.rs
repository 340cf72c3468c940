//! Nearest-neighbor machinery: neighbor sets on the retained coordinates,
//! local mean/median estimates, and generalized cross-validation for the
//! neighbor count r.
//!
//! Neighbor queries are brute force. Sample sizes in the intended use are a
//! few hundred (tens of thousands at the upper end of the consistency
//! experiments), so an O(n^2 d) scan with a partial sort per query point is
//! both fast enough and trivially deterministic. The scan lives behind
//! [`NeighborTable`] so a spatial index could be swapped in later.
//!
//! Two neighbor conventions are supported. With `include_self` the query
//! point is its own nearest neighbor (distance zero), which is the reading
//! under which the GCV denominator (1 - 1/r)^2 is the exact hat-trace
//! correction: algebraically, the self-inclusive GCV score at r equals the
//! plain leave-one-out residual of the self-free estimator with r - 1
//! neighbors. Without it the estimate at each point is built only from the
//! other observations (leave-one-out), which is the convention that
//! reproduces the published simulation studies. In both modes r = n means
//! every point, i.e. the plain column mean.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::spd_inverse_with_ridge;
use crate::matrix::{DataMatrix, SymMatrix};
use crate::pca::covariance;

/// Distance used on the retained coordinates.
#[derive(Debug, Clone)]
pub enum Metric {
    Euclidean,
    /// Squared distance (a-b)' P (a-b) with P symmetric positive-definite.
    Mahalanobis { precision: Array2<f64> },
}

/// Serializable metric choice; the Mahalanobis precision matrix is derived
/// per subset from the sample covariance of the retained columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Euclidean,
    Mahalanobis,
}

impl std::fmt::Display for MetricKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MetricKind::Euclidean => write!(f, "euclidean"),
            MetricKind::Mahalanobis => write!(f, "mahalanobis"),
        }
    }
}

impl Metric {
    /// Validates that the precision matrix is symmetric positive-definite.
    pub fn mahalanobis(precision: SymMatrix) -> Result<Metric> {
        if crate::linalg::cholesky(&precision).is_none() {
            return Err(Error::invalid_argument(
                "Mahalanobis precision matrix is not positive definite",
            ));
        }
        Ok(Metric::Mahalanobis {
            precision: precision.to_array(),
        })
    }

    /// Resolves a metric kind for the given subset of columns: Euclidean as
    /// is, Mahalanobis with the inverse covariance of those columns
    /// (ridged when the covariance is singular).
    pub fn resolve(kind: MetricKind, x: &DataMatrix, subset: &[usize]) -> Result<Metric> {
        match kind {
            MetricKind::Euclidean => Ok(Metric::Euclidean),
            MetricKind::Mahalanobis => {
                let cov = covariance(x).submatrix(subset);
                let precision = spd_inverse_with_ridge(&cov)?;
                Ok(Metric::Mahalanobis { precision })
            }
        }
    }

    #[inline]
    fn dist2(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Metric::Euclidean => a
                .iter()
                .zip(b.iter())
                .map(|(x, y)| {
                    let d = x - y;
                    d * d
                })
                .sum(),
            Metric::Mahalanobis { precision } => {
                let d = a.len();
                let mut acc = 0.0;
                for i in 0..d {
                    let di = a[i] - b[i];
                    for j in 0..d {
                        acc += di * precision[(i, j)] * (a[j] - b[j]);
                    }
                }
                acc
            }
        }
    }
}

/// Local estimate applied over each neighbor set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Mean,
    Median,
}

/// Neighbor-count selection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum RSelect {
    Fixed(usize),
    /// Select r per blinded column by generalized cross-validation.
    Auto,
}

/// Configuration of the nearest-neighbor estimator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NeighborConfig {
    pub r: RSelect,
    /// Candidate values for GCV; `None` means [`default_r_grid`].
    pub r_grid: Option<Vec<usize>>,
    pub estimator: Estimator,
    /// Whether a point counts among its own neighbors. See module docs.
    pub include_self: bool,
}

impl Default for NeighborConfig {
    fn default() -> Self {
        NeighborConfig {
            r: RSelect::Auto,
            r_grid: None,
            estimator: Estimator::Mean,
            include_self: true,
        }
    }
}

impl NeighborConfig {
    /// Leave-one-out variant: estimates never use the point's own value.
    /// This is the configuration under which the published simulation and
    /// case-study numbers are reproduced.
    pub fn leave_one_out() -> Self {
        NeighborConfig {
            include_self: false,
            ..Default::default()
        }
    }

    pub fn grid_for(&self, n: usize) -> Result<Vec<usize>> {
        let grid = match &self.r_grid {
            Some(g) => g.clone(),
            None => default_r_grid(n),
        };
        if grid.is_empty() {
            return Err(Error::invalid_argument("empty r grid"));
        }
        for &r in &grid {
            if r < 2 || r > n {
                return Err(Error::invalid_argument(format!(
                    "grid value r = {r} outside [2, {n}]"
                )));
            }
        }
        let mut grid = grid;
        grid.sort_unstable();
        grid.dedup();
        Ok(grid)
    }
}

/// Default GCV grid: {2, ..., ceil(4n/5)}.
///
/// The top end stays clear of r = n - 1, where the leave-one-out estimate
/// degenerates to an affine function of the target column itself
/// (Y_j = const - x_j/(n-1)) and spuriously matches any column up to sign.
/// Reaching well past n/2 matters on the other end: when a column carries
/// only a weak signal the criterion keeps growing r until the signal is
/// smoothed away, and capping the grid too early leaves residual structure
/// that distorts the blinded eigenvectors.
pub fn default_r_grid(n: usize) -> Vec<usize> {
    let top = (4 * n).div_ceil(5).max(2);
    (2..=top.min(n)).collect()
}

/// Logarithmically spaced GCV grid (about two values per octave) from 2 up
/// to `cap.min(n/2)`, plus r = n. Used where n is large and a dense grid
/// would dominate the runtime.
pub fn log_r_grid(n: usize, cap: usize) -> Vec<usize> {
    let top = (n / 2).min(cap).max(2);
    let mut g = Vec::new();
    let mut v = 2.0f64;
    while (v.round() as usize) <= top {
        let r = v.round() as usize;
        if g.last() != Some(&r) {
            g.push(r);
        }
        v *= std::f64::consts::SQRT_2;
    }
    if g.last() != Some(&top) {
        g.push(top);
    }
    if top < n {
        g.push(n);
    }
    g
}

/// Per-row neighbor orderings, sorted by (distance, index) ascending.
///
/// Only the first `r_max` entries of each row are kept; r = n queries are
/// answered from column totals instead. Ties in distance resolve to the
/// lower index, which makes every downstream estimate deterministic even
/// on data with duplicated rows.
pub struct NeighborTable {
    rows: Vec<Vec<u32>>,
    n: usize,
}

impl NeighborTable {
    pub fn build(z: ArrayView2<'_, f64>, metric: &Metric, include_self: bool, r_max: usize) -> Self {
        let n = z.nrows();
        let keep = r_max.min(if include_self { n } else { n - 1 });
        // contiguous row storage for the distance loop
        let d = z.ncols();
        let flat: Vec<f64> = z.iter().copied().collect();
        let row = |j: usize| &flat[j * d..(j + 1) * d];

        let rows: Vec<Vec<u32>> = (0..n)
            .map(|j| {
                let mut cand: Vec<(f64, u32)> = (0..n)
                    .filter(|&m| include_self || m != j)
                    .map(|m| (metric.dist2(row(j), row(m)), m as u32))
                    .collect();
                let take = keep.min(cand.len());
                if take < cand.len() {
                    cand.select_nth_unstable_by(take - 1, |a, b| {
                        a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
                    });
                    cand.truncate(take);
                }
                cand.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                cand.into_iter().map(|(_, m)| m).collect()
            })
            .collect();

        NeighborTable { rows, n }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Largest r answerable from the stored orderings (r = n is answered
    /// separately from column totals).
    pub fn r_stored(&self) -> usize {
        self.rows.first().map_or(0, |r| r.len())
    }

    /// The neighbor set of point j for a given r.
    pub fn set(&self, j: usize, r: usize) -> Result<Vec<usize>> {
        if r == self.n {
            return Ok((0..self.n).collect());
        }
        if r > self.r_stored() {
            return Err(Error::invalid_argument(format!(
                "r = {r} exceeds stored neighbor depth {}",
                self.r_stored()
            )));
        }
        Ok(self.rows[j][..r].iter().map(|&m| m as usize).collect())
    }

    /// Estimates of `col` at every point for each grid value of r, plus the
    /// GCV criterion per grid value. `col` must have length n.
    ///
    /// Returns (criteria, estimates) where `estimates[(g, j)]` is the local
    /// estimate at point j with r = grid[g].
    pub fn estimates_over_grid(
        &self,
        col: &[f64],
        grid: &[usize],
        estimator: Estimator,
    ) -> (Vec<f64>, Array2<f64>) {
        let n = self.n;
        let total: f64 = col.iter().sum();
        let full_mean = total / n as f64;
        let mut rss = vec![0.0; grid.len()];
        let mut est = Array2::<f64>::zeros((grid.len(), n));

        match estimator {
            Estimator::Mean => {
                for j in 0..n {
                    let order = &self.rows[j];
                    let mut cum = 0.0;
                    let mut g = 0;
                    for (m, &idx) in order.iter().enumerate() {
                        cum += col[idx as usize];
                        while g < grid.len() && grid[g] == m + 1 {
                            let e = cum / (m + 1) as f64;
                            est[(g, j)] = e;
                            let resid = col[j] - e;
                            rss[g] += resid * resid;
                            g += 1;
                        }
                    }
                    // grid entries beyond the stored depth must be r = n
                    while g < grid.len() {
                        debug_assert_eq!(grid[g], n);
                        // leave-one-out at full depth still averages everyone:
                        // r = n necessarily includes the point itself.
                        let e = full_mean;
                        est[(g, j)] = e;
                        let resid = col[j] - e;
                        rss[g] += resid * resid;
                        g += 1;
                    }
                }
            }
            Estimator::Median => {
                let mut buf: Vec<f64> = Vec::with_capacity(self.r_stored().max(n));
                let mut all: Vec<f64> = col.to_vec();
                let full_median = median_in_place(&mut all);
                for j in 0..n {
                    let order = &self.rows[j];
                    for (g, &r) in grid.iter().enumerate() {
                        let e = if r == n {
                            full_median
                        } else {
                            buf.clear();
                            buf.extend(order[..r].iter().map(|&m| col[m as usize]));
                            median_in_place(&mut buf)
                        };
                        est[(g, j)] = e;
                        let resid = col[j] - e;
                        rss[g] += resid * resid;
                    }
                }
            }
        }

        let crit: Vec<f64> = grid
            .iter()
            .zip(rss.iter())
            .map(|(&r, &s)| {
                let pen = 1.0 - 1.0 / r as f64;
                (s / n as f64) / (pen * pen)
            })
            .collect();
        (crit, est)
    }
}

fn median_in_place(v: &mut [f64]) -> f64 {
    let n = v.len();
    let mid = n / 2;
    let (_, m, _) = v.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
    let hi = *m;
    if n % 2 == 1 {
        hi
    } else {
        let lo = v[..mid]
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lo + hi)
    }
}

/// The r-nearest-neighbor index sets of each row of z (self-inclusive).
pub fn neighbor_sets(
    z: ArrayView2<'_, f64>,
    r: usize,
    metric: &Metric,
) -> Result<Vec<Vec<usize>>> {
    let n = z.nrows();
    if r < 1 || r > n {
        return Err(Error::invalid_argument(format!(
            "r = {r} outside [1, {n}]"
        )));
    }
    let table = NeighborTable::build(z, metric, true, r);
    (0..n).map(|j| table.set(j, r)).collect()
}

/// Mean or median of column `col` of x over each neighbor set.
pub fn local_estimate(
    x: &DataMatrix,
    sets: &[Vec<usize>],
    col: usize,
    estimator: Estimator,
) -> Result<Vec<f64>> {
    if col >= x.n_cols() {
        return Err(Error::invalid_argument(format!(
            "column {col} out of range"
        )));
    }
    let column: Vec<f64> = x.column(col).iter().copied().collect();
    Ok(sets
        .iter()
        .map(|set| match estimator {
            Estimator::Mean => set.iter().map(|&m| column[m]).sum::<f64>() / set.len() as f64,
            Estimator::Median => {
                let mut vals: Vec<f64> = set.iter().map(|&m| column[m]).collect();
                median_in_place(&mut vals)
            }
        })
        .collect())
}

/// GCV residual numerator (1/n) sum_j (x_j[col] - Y_j[col])^2 at a given r.
/// Exposed for the self-inclusion sanity check: at r = 1 with distinct rows
/// the estimate copies the column and the numerator is exactly zero.
pub fn gcv_numerator(
    x: &DataMatrix,
    subset: &[usize],
    col: usize,
    r: usize,
    metric: &Metric,
    include_self: bool,
) -> Result<f64> {
    let n = x.n_rows();
    if r < 1 || r > n {
        return Err(Error::invalid_argument(format!("r = {r} outside [1, {n}]")));
    }
    let z = subset_view(x, subset);
    let table = NeighborTable::build(z.view(), metric, include_self, r);
    let column: Vec<f64> = x.column(col).iter().copied().collect();
    let (_, est) = table.estimates_over_grid(&column, &[r], Estimator::Mean);
    let rss: f64 = (0..n)
        .map(|j| {
            let d = column[j] - est[(0, j)];
            d * d
        })
        .sum();
    Ok(rss / n as f64)
}

/// Selects r for one blinded column by minimizing the GCV criterion
/// (1/n) sum_j (X_j[col] - Y_j[col])^2 / (1 - 1/r)^2 over the grid.
/// Ties resolve to the smallest r.
pub fn gcv_select_r(
    x: &DataMatrix,
    subset: &[usize],
    col: usize,
    grid: &[usize],
    metric: &Metric,
    include_self: bool,
) -> Result<usize> {
    if grid.is_empty() {
        return Err(Error::invalid_argument("empty r grid"));
    }
    let n = x.n_rows();
    let mut sorted = grid.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted[0] < 2 || *sorted.last().unwrap() > n {
        return Err(Error::invalid_argument(format!(
            "grid values must lie in [2, {n}]"
        )));
    }
    if subset.contains(&col) {
        return Err(Error::invalid_argument(format!(
            "column {col} is in the retained subset"
        )));
    }
    let z = subset_view(x, subset);
    let r_max = sorted.iter().copied().filter(|&r| r < n).max().unwrap_or(0);
    let table = NeighborTable::build(z.view(), metric, include_self, r_max);
    let column: Vec<f64> = x.column(col).iter().copied().collect();
    let (crit, _) = table.estimates_over_grid(&column, &sorted, Estimator::Mean);
    let mut best = 0;
    for g in 1..sorted.len() {
        if crit[g] < crit[best] {
            best = g;
        }
    }
    Ok(sorted[best])
}

/// The retained columns of x as a dense n x d matrix.
pub(crate) fn subset_view(x: &DataMatrix, subset: &[usize]) -> Array2<f64> {
    let n = x.n_rows();
    let mut z = Array2::<f64>::zeros((n, subset.len()));
    for (k, &i) in subset.iter().enumerate() {
        z.column_mut(k).assign(&x.column(i));
    }
    z
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn line_points() -> Array2<f64> {
        array![[0.0], [1.0], [3.0]]
    }

    #[test]
    fn r1_distinct_rows_is_identity() {
        let sets = neighbor_sets(line_points().view(), 1, &Metric::Euclidean).unwrap();
        assert_eq!(sets, vec![vec![0], vec![1], vec![2]]);
    }

    #[test]
    fn r_equals_n_is_everyone() {
        let sets = neighbor_sets(line_points().view(), 3, &Metric::Euclidean).unwrap();
        for s in sets {
            assert_eq!(s, vec![0, 1, 2]);
        }
    }

    #[test]
    fn hand_checked_pairs() {
        // Z = (0),(1),(3), r=2: C1={1,2}, C2={2,1}, C3={3,2} in 1-based terms
        let sets = neighbor_sets(line_points().view(), 2, &Metric::Euclidean).unwrap();
        assert_eq!(sets[0], vec![0, 1]);
        assert_eq!(sets[1], vec![1, 0]);
        assert_eq!(sets[2], vec![2, 1]);
    }

    #[test]
    fn r_out_of_range_rejected() {
        assert!(neighbor_sets(line_points().view(), 4, &Metric::Euclidean).is_err());
        assert!(neighbor_sets(line_points().view(), 0, &Metric::Euclidean).is_err());
    }

    #[test]
    fn local_estimate_hand_case() {
        // column (1,2,10) over the r=2 sets above -> (1.5, 1.5, 6)
        let x = DataMatrix::new(array![[0.0, 1.0], [1.0, 2.0], [3.0, 10.0]]).unwrap();
        let sets = neighbor_sets(subset_view(&x, &[0]).view(), 2, &Metric::Euclidean).unwrap();
        let est = local_estimate(&x, &sets, 1, Estimator::Mean).unwrap();
        assert_eq!(est, vec![1.5, 1.5, 6.0]);
    }

    #[test]
    fn local_estimate_r_n_is_column_mean() {
        let x = DataMatrix::new(array![[0.0, 1.0], [1.0, 2.0], [3.0, 12.0]]).unwrap();
        let sets = neighbor_sets(subset_view(&x, &[0]).view(), 3, &Metric::Euclidean).unwrap();
        let est = local_estimate(&x, &sets, 1, Estimator::Mean).unwrap();
        assert_eq!(est, vec![5.0, 5.0, 5.0]);
    }

    #[test]
    fn gcv_numerator_zero_at_r1_with_self() {
        let x = DataMatrix::new(array![
            [0.0, 1.0],
            [1.0, 2.0],
            [3.0, 10.0],
            [7.0, 4.0]
        ])
        .unwrap();
        let num = gcv_numerator(&x, &[0], 1, 1, &Metric::Euclidean, true).unwrap();
        assert_eq!(num, 0.0);
    }

    #[test]
    fn mahalanobis_identity_equals_euclidean() {
        let z = array![[0.0, 0.5], [1.0, -0.25], [3.0, 2.0], [1.5, 1.0]];
        let id = SymMatrix::new(array![[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let maha = Metric::mahalanobis(id).unwrap();
        for r in 1..=4 {
            let a = neighbor_sets(z.view(), r, &Metric::Euclidean).unwrap();
            let b = neighbor_sets(z.view(), r, &maha).unwrap();
            assert_eq!(a, b, "r = {r}");
        }
    }

    #[test]
    fn mahalanobis_requires_spd() {
        let bad = SymMatrix::new(array![[1.0, 2.0], [2.0, 1.0]]).unwrap();
        assert!(Metric::mahalanobis(bad).is_err());
    }

    #[test]
    fn ties_break_by_index() {
        // duplicate rows: 0 and 1 identical
        let z = array![[1.0], [1.0], [5.0]];
        let sets = neighbor_sets(z.view(), 1, &Metric::Euclidean).unwrap();
        // both duplicates see row 0 first
        assert_eq!(sets[0], vec![0]);
        assert_eq!(sets[1], vec![0]);
        assert_eq!(sets[2], vec![2]);
    }

    #[test]
    fn gcv_prefers_small_r_on_copy_column() {
        // column 1 is an exact copy of column 0 plus tiny noise
        let n = 60;
        let mut rows = Vec::new();
        for i in 0..n {
            let t = i as f64 / n as f64;
            rows.push([t, t + 1e-9 * (i as f64)]);
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let x = DataMatrix::new(Array2::from_shape_vec((n, 2), flat).unwrap()).unwrap();
        let grid: Vec<usize> = (2..=n / 2).collect();
        let r = gcv_select_r(&x, &[0], 1, &grid, &Metric::Euclidean, false).unwrap();
        assert!(r <= 4, "expected small r on a copy column, got {r}");
    }

    #[test]
    fn median_of_even_set() {
        let mut v = vec![4.0, 1.0, 3.0, 2.0];
        assert_eq!(median_in_place(&mut v), 2.5);
    }
}
