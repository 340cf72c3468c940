//! Python bindings exposing the main selection pipeline: model generators,
//! subset evaluation, search, the analytic population mode, and the B2/B4
//! baselines. Matrices cross the boundary as lists of row lists.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use blindpca::objective::{EvalConfig, WeightScheme};
use blindpca::search::{DSelect, SearchConfig, SelectionResult, Strategy};
use blindpca::simgen::{generate, ModelKind, ModelSpec};
use blindpca::{
    baselines, evaluate_population, DataMatrix, Error, Estimator, MetricKind, NeighborConfig,
    ObjectiveReport, RSelect, SubsetIndex,
};

fn to_py_err(e: Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn data_matrix(rows: Vec<Vec<f64>>) -> PyResult<DataMatrix> {
    let n = rows.len();
    let p = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != p) {
        return Err(PyValueError::new_err("rows have unequal lengths"));
    }
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let values = ndarray::Array2::from_shape_vec((n, p), flat)
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    DataMatrix::new(values).map_err(to_py_err)
}

fn eval_config(
    q: usize,
    weights: &str,
    metric: &str,
    r: Option<usize>,
    leave_one_out: bool,
) -> PyResult<EvalConfig> {
    let weights = match weights {
        "equal" => WeightScheme::Equal,
        "variance" => WeightScheme::Variance,
        other => {
            return Err(PyValueError::new_err(format!(
                "weights must be 'equal' or 'variance', got '{other}'"
            )))
        }
    };
    let metric = match metric {
        "euclidean" => MetricKind::Euclidean,
        "mahalanobis" => MetricKind::Mahalanobis,
        other => {
            return Err(PyValueError::new_err(format!(
                "metric must be 'euclidean' or 'mahalanobis', got '{other}'"
            )))
        }
    };
    Ok(EvalConfig {
        q,
        weights,
        neighbors: NeighborConfig {
            r: r.map_or(RSelect::Auto, RSelect::Fixed),
            r_grid: None,
            estimator: Estimator::Mean,
            include_self: !leave_one_out,
        },
        metric,
    })
}

fn report_dict<'py>(py: Python<'py>, report: &ObjectiveReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("subset", report.subset.indices().to_vec())?;
    d.set_item("h", report.h)?;
    d.set_item(
        "angles_deg",
        report
            .per_component
            .iter()
            .map(|c| c.angle_deg)
            .collect::<Vec<_>>(),
    )?;
    d.set_item(
        "per_component_h",
        report.per_component.iter().map(|c| c.h).collect::<Vec<_>>(),
    )?;
    d.set_item("largest_angle_deg", report.largest_angle_deg())?;
    d.set_item("weights", report.weights.clone())?;
    d.set_item("degenerate", report.degenerate)?;
    d.set_item("r_used", report.r_used.clone())?;
    Ok(d)
}

fn selection_dict<'py>(py: Python<'py>, res: &SelectionResult) -> PyResult<Bound<'py, PyDict>> {
    let d = report_dict(py, &res.report)?;
    d.set_item("evaluations", res.evaluations)?;
    d.set_item("threshold_unmet", res.threshold_unmet)?;
    d.set_item("d", res.subset.len())?;
    Ok(d)
}

/// Draws a sample from a built-in simulation model
/// ("example1-dim4", "example1-dim23", "example2-dim10").
#[pyfunction]
#[pyo3(signature = (model, n, seed=0))]
fn generate_model(model: &str, n: usize, seed: u64) -> PyResult<Vec<Vec<f64>>> {
    let kind = ModelKind::parse(model).map_err(to_py_err)?;
    let x = generate(&ModelSpec { kind, n, seed }).map_err(to_py_err)?;
    let v = x.values();
    Ok((0..x.n_rows())
        .map(|j| v.row(j).to_vec())
        .collect())
}

/// Evaluates the blinding objective for one subset (0-based indices).
#[pyfunction]
#[pyo3(signature = (data, subset, q=2, weights="equal", metric="euclidean", r=None, leave_one_out=true))]
#[allow(clippy::too_many_arguments)]
fn evaluate_subset<'py>(
    py: Python<'py>,
    data: Vec<Vec<f64>>,
    subset: Vec<usize>,
    q: usize,
    weights: &str,
    metric: &str,
    r: Option<usize>,
    leave_one_out: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let x = data_matrix(data)?;
    let subset = SubsetIndex::from_unsorted(subset).map_err(to_py_err)?;
    let cfg = eval_config(q, weights, metric, r, leave_one_out)?;
    let report = blindpca::evaluate(&x, &subset, &cfg).map_err(to_py_err)?;
    report_dict(py, &report)
}

/// Searches for the best subset. `d=None` applies the angle rule with the
/// given gamma (degrees).
#[pyfunction]
#[pyo3(signature = (data, d=None, q=2, gamma=20.0, weights="equal", metric="euclidean",
                    strategy="exhaustive", seed=0, leave_one_out=true))]
#[allow(clippy::too_many_arguments)]
fn select<'py>(
    py: Python<'py>,
    data: Vec<Vec<f64>>,
    d: Option<usize>,
    q: usize,
    gamma: f64,
    weights: &str,
    metric: &str,
    strategy: &str,
    seed: u64,
    leave_one_out: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let x = data_matrix(data)?;
    let strategy = match strategy {
        "exhaustive" => Strategy::Exhaustive,
        "fb" | "forward-backward" => Strategy::ForwardBackward,
        "genetic" => Strategy::Genetic,
        other => {
            return Err(PyValueError::new_err(format!(
                "strategy must be exhaustive | fb | genetic, got '{other}'"
            )))
        }
    };
    let cfg = SearchConfig {
        strategy,
        d: d.map_or(DSelect::Auto, DSelect::Fixed),
        gamma_deg: gamma,
        d_max: None,
        eval: eval_config(q, weights, metric, None, leave_one_out)?,
        seed,
        exhaustive_cap: 100_000,
    };
    let res = blindpca::search::run(&x, &cfg).map_err(to_py_err)?;
    selection_dict(py, &res)
}

/// Analytic population objective of the ten-variable Gaussian model for a
/// subset of 0-based variable indices.
#[pyfunction]
#[pyo3(signature = (subset, q=2, weights="equal"))]
fn theory_evaluate<'py>(
    py: Python<'py>,
    subset: Vec<usize>,
    q: usize,
    weights: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let model = blindpca::example2_true_cov();
    let subset = SubsetIndex::from_unsorted(subset).map_err(to_py_err)?;
    let scheme = match weights {
        "equal" => WeightScheme::Equal,
        "variance" => WeightScheme::Variance,
        other => {
            return Err(PyValueError::new_err(format!(
                "weights must be 'equal' or 'variance', got '{other}'"
            )))
        }
    };
    let report = evaluate_population(&model, &subset, q, &scheme).map_err(to_py_err)?;
    report_dict(py, &report)
}

/// Jolliffe's B2 rule (returns 0-based retained indices).
#[pyfunction]
fn b2(data: Vec<Vec<f64>>, keep: usize) -> PyResult<Vec<usize>> {
    let x = data_matrix(data)?;
    Ok(baselines::b2(&x, keep)
        .map_err(to_py_err)?
        .indices()
        .to_vec())
}

/// Jolliffe's B4 rule (returns 0-based retained indices).
#[pyfunction]
fn b4(data: Vec<Vec<f64>>, keep: usize) -> PyResult<Vec<usize>> {
    let x = data_matrix(data)?;
    Ok(baselines::b4(&x, keep)
        .map_err(to_py_err)?
        .indices()
        .to_vec())
}

/// Eigenvalues and loadings of the sample covariance.
#[pyfunction]
#[pyo3(signature = (data, q=None))]
fn pca<'py>(py: Python<'py>, data: Vec<Vec<f64>>, q: Option<usize>) -> PyResult<Bound<'py, PyDict>> {
    let x = data_matrix(data)?;
    let q = q.unwrap_or(x.n_cols());
    let eig = blindpca::principal_components(&x, q).map_err(to_py_err)?;
    let d = PyDict::new(py);
    d.set_item("eigenvalues", eig.eigenvalues.clone())?;
    let loadings: Vec<Vec<f64>> = (0..q).map(|k| eig.eigenvector(k).to_vec()).collect();
    d.set_item("loadings", loadings)?;
    d.set_item("degenerate", eig.degenerate)?;
    Ok(d)
}

#[pymodule]
fn blindpca_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(generate_model, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_subset, m)?)?;
    m.add_function(wrap_pyfunction!(select, m)?)?;
    m.add_function(wrap_pyfunction!(theory_evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(b2, m)?)?;
    m.add_function(wrap_pyfunction!(b4, m)?)?;
    m.add_function(wrap_pyfunction!(pca, m)?)?;
    Ok(())
}
