//! Python bindings. Matrices cross the boundary as lists of rows.

use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use robmean::baselines::{self, FilterConfig};
use robmean::datagen;
use robmean::harness::{self, ExperimentSpec};
use robmean::solvers::{self as solv, IrlsConfig, IrlsVariant, SolverOptions};
use robmean::spectral;
use robmean::{Dataset, Error, EstimatorConfig, Method};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::NotConverged { .. } => PyRuntimeError::new_err(e.to_string()),
        Error::Io(_) => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn dataset(rows: Vec<Vec<f64>>) -> PyResult<Dataset> {
    Dataset::from_rows(&rows).map_err(to_py)
}

fn vector(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

fn square(rows: Vec<Vec<f64>>) -> PyResult<spectral::SymMatrix> {
    let d = rows.len();
    if rows.iter().any(|r| r.len() != d) {
        return Err(PyValueError::new_err("matrix must be square"));
    }
    spectral::SymMatrix::new(DMatrix::from_fn(d, d, |i, j| rows[i][j])).map_err(to_py)
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Scatter bound `c1^2 * n * sigma^2`.
#[pyclass(frozen, skip_from_py_object, name = "MomentBound")]
#[derive(Clone)]
struct PyMomentBound(robmean::MomentBound);

#[pymethods]
impl PyMomentBound {
    #[new]
    #[pyo3(signature = (sigma, n, c1_squared = 1.5))]
    fn new(sigma: f64, n: usize, c1_squared: f64) -> PyResult<Self> {
        robmean::MomentBound::new(sigma, c1_squared, n).map(Self).map_err(to_py)
    }

    #[getter]
    fn sigma(&self) -> f64 {
        self.0.sigma()
    }

    #[getter]
    fn c1_squared(&self) -> f64 {
        self.0.c1_squared()
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.n()
    }

    fn rho(&self) -> f64 {
        self.0.rho()
    }

    fn __repr__(&self) -> String {
        format!(
            "MomentBound(sigma={}, n={}, c1_squared={})",
            self.0.sigma(),
            self.0.n(),
            self.0.c1_squared()
        )
    }
}

#[pyclass(frozen, get_all, name = "EstimateResult")]
struct PyEstimateResult {
    mean: Vec<f64>,
    /// Indices flagged as outliers.
    support: Vec<usize>,
    relaxed_h: Vec<f64>,
    l0_trace: Vec<usize>,
    outer_iterations: usize,
    termination: String,
}

#[pymethods]
impl PyEstimateResult {
    fn __repr__(&self) -> String {
        format!(
            "EstimateResult(l0_trace={:?}, outer_iterations={}, termination={:?})",
            self.l0_trace, self.outer_iterations, self.termination
        )
    }
}

#[pyclass(frozen, get_all, name = "CorruptedDataset")]
struct PyCorruptedDataset {
    rows: Vec<Vec<f64>>,
    inlier_mask: Vec<bool>,
    oracle_mean: Vec<f64>,
    seed: Option<u64>,
}

impl From<datagen::CorruptedDataset> for PyCorruptedDataset {
    fn from(ds: datagen::CorruptedDataset) -> Self {
        Self {
            rows: ds.data.rows(),
            inlier_mask: ds.inlier_mask,
            oracle_mean: vector(&ds.oracle_mean),
            seed: ds.seed,
        }
    }
}

#[pymethods]
impl PyCorruptedDataset {
    /// `||estimate - oracle_mean||_2`
    fn recovery_error(&self, estimate: Vec<f64>) -> PyResult<f64> {
        if estimate.len() != self.oracle_mean.len() {
            return Err(PyValueError::new_err("estimate dimension mismatch"));
        }
        Ok(estimate
            .iter()
            .zip(&self.oracle_mean)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt())
    }
}

/// Runs the alternating estimator. `method` is `"l1"` or `"lp"`.
#[pyfunction]
#[pyo3(signature = (rows, bound, method = "lp", p = 0.5, tau = 0.5, outer_reweights = 3))]
fn robust_mean(
    py: Python<'_>,
    rows: Vec<Vec<f64>>,
    bound: &PyMomentBound,
    method: &str,
    p: f64,
    tau: f64,
    outer_reweights: usize,
) -> PyResult<PyEstimateResult> {
    let data = dataset(rows)?;
    let method = match method {
        "l1" => Method::L1,
        "lp" => Method::Lp(IrlsConfig::new(p, outer_reweights, 1e-6, IrlsVariant::ReweightedL2).map_err(to_py)?),
        other => return Err(PyValueError::new_err(format!("unknown method {other:?}"))),
    };
    let cfg = EstimatorConfig {
        method,
        tau,
        ..EstimatorConfig::default()
    };
    let bound = bound.0;
    let r = py.detach(|| robmean::robust_mean(&data, &bound, &cfg)).map_err(to_py)?;
    Ok(PyEstimateResult {
        mean: vector(&r.mean),
        support: r.indicator.support().to_vec(),
        relaxed_h: r.relaxed_h,
        l0_trace: r.l0_trace,
        outer_iterations: r.outer_iterations,
        termination: format!("{:?}", r.termination),
    })
}

/// Fractional indicator `h` of the l1 relaxation around `center`.
#[pyfunction]
fn solve_l1(rows: Vec<Vec<f64>>, center: Vec<f64>, bound: &PyMomentBound) -> PyResult<Vec<f64>> {
    let data = dataset(rows)?;
    let r = solv::solve_l1(&data, &DVector::from_vec(center), &bound.0, &SolverOptions::default()).map_err(to_py)?;
    Ok(r.h)
}

/// Fractional indicator `h` of the lp relaxation around `center`.
#[pyfunction]
#[pyo3(signature = (rows, center, bound, p = 0.5))]
fn solve_lp(rows: Vec<Vec<f64>>, center: Vec<f64>, bound: &PyMomentBound, p: f64) -> PyResult<Vec<f64>> {
    let data = dataset(rows)?;
    let cfg = IrlsConfig {
        p,
        ..IrlsConfig::default()
    };
    let r = solv::solve_lp(
        &data,
        &DVector::from_vec(center),
        &bound.0,
        &cfg,
        &SolverOptions::default(),
    )
    .map_err(to_py)?;
    Ok(r.h)
}

#[pyfunction]
fn weighted_scatter(rows: Vec<Vec<f64>>, center: Vec<f64>, weights: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
    let data = dataset(rows)?;
    let m = spectral::weighted_scatter(&data, &DVector::from_vec(center), &weights).map_err(to_py)?;
    Ok(matrix_rows(m.as_matrix()))
}

/// Largest eigenvalue and its unit eigenvector.
#[pyfunction]
#[pyo3(signature = (matrix, tol = 1e-8, max_iter = None))]
fn lambda_max(matrix: Vec<Vec<f64>>, tol: f64, max_iter: Option<usize>) -> PyResult<(f64, Vec<f64>)> {
    let m = square(matrix)?;
    let it = max_iter.unwrap_or_else(|| spectral::default_max_iter(m.dim()));
    let e = spectral::lambda_max(&m, tol, it).map_err(to_py)?;
    Ok((e.value, vector(&e.vector)))
}

#[pyfunction]
fn coordinate_median(rows: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
    Ok(vector(&baselines::coordinate_median(&dataset(rows)?)))
}

#[pyfunction]
#[pyo3(signature = (rows, tol = 1e-8, max_iter = 1000))]
fn geometric_median(rows: Vec<Vec<f64>>, tol: f64, max_iter: usize) -> PyResult<Vec<f64>> {
    let g = baselines::geometric_median(&dataset(rows)?, tol, max_iter).map_err(to_py)?;
    Ok(vector(&g.point))
}

#[pyfunction]
#[pyo3(signature = (rows, sigma, spectral_threshold = 2.0, removal_fraction = 0.02, max_rounds = 50))]
fn iterative_filter(
    rows: Vec<Vec<f64>>,
    sigma: f64,
    spectral_threshold: f64,
    removal_fraction: f64,
    max_rounds: usize,
) -> PyResult<Vec<f64>> {
    let cfg = FilterConfig {
        spectral_threshold,
        removal_fraction,
        max_rounds,
    };
    let r = baselines::iterative_filter(&dataset(rows)?, sigma, &cfg).map_err(to_py)?;
    Ok(vector(&r.mean))
}

#[pyfunction]
fn gen_setting_a(d: usize, n: usize, alpha: f64, seed: u64) -> PyResult<PyCorruptedDataset> {
    datagen::gen_setting_a(d, n, alpha, seed).map(Into::into).map_err(to_py)
}

#[pyfunction]
fn gen_setting_b(d: usize, n: usize, alpha: f64, seed: u64) -> PyResult<PyCorruptedDataset> {
    datagen::gen_setting_b(d, n, alpha, seed).map(Into::into).map_err(to_py)
}

/// Exhaustive minimum-removal oracle: `(min_l0, support, mean)`.
#[pyfunction]
fn brute_force_l0(rows: Vec<Vec<f64>>, bound: &PyMomentBound) -> PyResult<(usize, Vec<usize>, Vec<f64>)> {
    let r = harness::brute_force_l0(&dataset(rows)?, &bound.0).map_err(to_py)?;
    Ok((r.min_l0, r.support, vector(&r.mean)))
}

/// Runs an experiment described by CLI-style `key=value` settings and
/// returns the rendered CSV (or JSON with `format="json"`).
#[pyfunction]
fn run_experiment(py: Python<'_>, settings: Vec<(String, String)>) -> PyResult<String> {
    let mut spec = ExperimentSpec::default();
    for (k, v) in &settings {
        spec.apply(k, v).map_err(to_py)?;
    }
    let bytes = py
        .detach(|| harness::run_experiment(&spec).and_then(|rows| harness::render(&spec, &rows)))
        .map_err(to_py)?;
    String::from_utf8(bytes).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

#[pymodule]
fn robmean_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMomentBound>()?;
    m.add_class::<PyEstimateResult>()?;
    m.add_class::<PyCorruptedDataset>()?;
    m.add_function(wrap_pyfunction!(robust_mean, m)?)?;
    m.add_function(wrap_pyfunction!(solve_l1, m)?)?;
    m.add_function(wrap_pyfunction!(solve_lp, m)?)?;
    m.add_function(wrap_pyfunction!(weighted_scatter, m)?)?;
    m.add_function(wrap_pyfunction!(lambda_max, m)?)?;
    m.add_function(wrap_pyfunction!(coordinate_median, m)?)?;
    m.add_function(wrap_pyfunction!(geometric_median, m)?)?;
    m.add_function(wrap_pyfunction!(iterative_filter, m)?)?;
    m.add_function(wrap_pyfunction!(gen_setting_a, m)?)?;
    m.add_function(wrap_pyfunction!(gen_setting_b, m)?)?;
    m.add_function(wrap_pyfunction!(brute_force_l0, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
