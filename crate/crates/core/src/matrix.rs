//! Data containers: observation matrices and symmetric matrices.

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An n x p sample: one row per observation, one column per variable.
#[derive(Debug, Clone)]
pub struct DataMatrix {
    values: Array2<f64>,
    col_names: Option<Vec<String>>,
}

impl DataMatrix {
    /// Wraps a raw matrix, enforcing n >= 2, p >= 2 and finiteness.
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.nrows() < 2 {
            return Err(Error::invalid_data(format!(
                "need at least 2 observations, got {}",
                values.nrows()
            )));
        }
        if values.ncols() < 2 {
            return Err(Error::invalid_data(format!(
                "need at least 2 variables, got {}",
                values.ncols()
            )));
        }
        if let Some((i, j)) = first_non_finite(&values.view()) {
            return Err(Error::invalid_data(format!(
                "non-finite value at row {i}, column {j}"
            )));
        }
        Ok(DataMatrix {
            values,
            col_names: None,
        })
    }

    pub fn with_names(values: Array2<f64>, col_names: Vec<String>) -> Result<Self> {
        if col_names.len() != values.ncols() {
            return Err(Error::invalid_data(format!(
                "{} column names for {} columns",
                col_names.len(),
                values.ncols()
            )));
        }
        let mut m = Self::new(values)?;
        m.col_names = Some(col_names);
        Ok(m)
    }

    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn column(&self, j: usize) -> ArrayView1<'_, f64> {
        self.values.column(j)
    }

    pub fn col_names(&self) -> Option<&[String]> {
        self.col_names.as_deref()
    }

    /// Column label: the provided name, or "X{j+1}" when unnamed.
    pub fn col_label(&self, j: usize) -> String {
        match &self.col_names {
            Some(names) => names[j].clone(),
            None => format!("X{}", j + 1),
        }
    }

    /// Restricts to the given rows, keeping all columns.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let p = self.n_cols();
        let mut out = Array2::zeros((rows.len(), p));
        for (k, &i) in rows.iter().enumerate() {
            out.row_mut(k).assign(&self.values.row(i));
        }
        let mut m = Self::new(out)?;
        m.col_names = self.col_names.clone();
        Ok(m)
    }
}

/// A p x p symmetric matrix (covariance matrices and their relatives).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SymMatrix {
    dim: usize,
    values: Vec<f64>, // row-major p*p
}

impl SymMatrix {
    /// Relative tolerance for the symmetry check.
    pub const SYM_TOL: f64 = 1e-12;

    pub fn new(values: Array2<f64>) -> Result<Self> {
        let (r, c) = (values.nrows(), values.ncols());
        if r != c {
            return Err(Error::invalid_data(format!("matrix is {r}x{c}, not square")));
        }
        if let Some((i, j)) = first_non_finite(&values.view()) {
            return Err(Error::invalid_data(format!(
                "non-finite value at ({i}, {j})"
            )));
        }
        let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        for i in 0..r {
            for j in (i + 1)..r {
                if (values[(i, j)] - values[(j, i)]).abs() > Self::SYM_TOL * scale {
                    return Err(Error::invalid_data(format!(
                        "asymmetric at ({i}, {j}): {} vs {}",
                        values[(i, j)],
                        values[(j, i)]
                    )));
                }
            }
        }
        Ok(SymMatrix {
            dim: r,
            values: values.into_iter().collect(),
        })
    }

    /// Builds from the (i, j) |-> value function, symmetrizing exactly.
    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut values = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in i..dim {
                let v = f(i, j);
                if !v.is_finite() {
                    return Err(Error::invalid_data(format!("non-finite value at ({i}, {j})")));
                }
                values[i * dim + j] = v;
                values[j * dim + i] = v;
            }
        }
        Ok(SymMatrix { dim, values })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.dim + j]
    }

    pub fn to_array(&self) -> Array2<f64> {
        Array2::from_shape_vec((self.dim, self.dim), self.values.clone())
            .expect("dimensions consistent by construction")
    }

    /// Frobenius norm.
    pub fn fro_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// The principal submatrix on `idx` (in the given order).
    pub fn submatrix(&self, idx: &[usize]) -> SymMatrix {
        let d = idx.len();
        let mut values = vec![0.0; d * d];
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                values[a * d + b] = self.get(i, j);
            }
        }
        SymMatrix { dim: d, values }
    }
}

fn first_non_finite(m: &ArrayView2<'_, f64>) -> Option<(usize, usize)> {
    for ((i, j), v) in m.indexed_iter() {
        if !v.is_finite() {
            return Some((i, j));
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn rejects_non_finite() {
        let err = DataMatrix::new(array![[1.0, 2.0], [f64::NAN, 0.0]]).unwrap_err();
        assert!(err.to_string().contains("non-finite"));
    }

    #[test]
    fn rejects_single_row() {
        assert!(DataMatrix::new(Array2::zeros((1, 3))).is_err());
    }

    #[test]
    fn symmetry_enforced() {
        assert!(SymMatrix::new(array![[1.0, 0.5], [0.4, 1.0]]).is_err());
        let s = SymMatrix::new(array![[1.0, 0.5], [0.5, 1.0]]).unwrap();
        assert_eq!(s.get(0, 1), 0.5);
    }

    #[test]
    fn submatrix_picks_entries() {
        let s = SymMatrix::from_fn(3, |i, j| (i * 3 + j) as f64).unwrap();
        let sub = s.submatrix(&[0, 2]);
        assert_eq!(sub.get(1, 1), 8.0);
        assert_eq!(sub.get(0, 1), 2.0);
    }
}
