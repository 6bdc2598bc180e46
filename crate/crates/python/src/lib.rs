//! Python bindings. Matrices cross the boundary as lists of rows.

use pyo3::create_exception;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use blockchol::block_model::{GroupPartition, PrecisionEstimate};
use blockchol::estimator::{self, Dataset, FitConfig, MethodMode};
use blockchol::linalg::{Matrix, SymMatrix};
use blockchol::metrics::{self, METRIC_NAMES};
use blockchol::predict::PredictTask;
use blockchol::scenario::{self, GeneratedTruth, ScenarioSpec};
use blockchol::selection::{self, TuningGrid, DEFAULT_GRID_SIZE, DEFAULT_MIN_RATIO};
use blockchol::simulation::{self, SimMethod, SimulationConfig};
use blockchol::{io, Error};

create_exception!(pyblockchol, NotPositiveDefiniteError, PyRuntimeError);

fn to_py(e: Error) -> PyErr {
    match e {
        Error::InvalidInput(m) => PyValueError::new_err(m),
        Error::NotPositiveDefinite(m) => NotPositiveDefiniteError::new_err(m),
    }
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<Matrix> {
    Matrix::from_rows(&rows).map_err(to_py)
}

type Rows = Vec<Vec<f64>>;

fn rows(m: &Matrix) -> Rows {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

fn dataset(data: Vec<Vec<f64>>, groups: Vec<usize>) -> PyResult<Dataset> {
    let partition = GroupPartition::new(groups).map_err(to_py)?;
    Dataset::new(matrix(data)?, partition).map_err(to_py)
}

fn method(name: &str) -> PyResult<MethodMode> {
    MethodMode::parse(name).map_err(to_py)
}

/// A fitted precision matrix `Ω = Tᵀ D⁻¹ T`.
#[pyclass(name = "Estimate", module = "pyblockchol", frozen)]
struct PyEstimate {
    inner: PrecisionEstimate,
}

#[pymethods]
impl PyEstimate {
    #[getter]
    fn omega(&self) -> Vec<Vec<f64>> {
        rows(self.inner.omega.as_matrix())
    }

    /// The unit block lower-triangular factor `T` as a dense matrix.
    #[getter]
    fn t(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.t.to_dense())
    }

    /// The block-diagonal `D⁻¹` as a dense matrix.
    #[getter]
    fn dinv(&self) -> Vec<Vec<f64>> {
        rows(self.inner.dinv.to_dense().as_matrix())
    }

    #[getter]
    fn groups(&self) -> Vec<usize> {
        self.inner.partition.sizes().to_vec()
    }

    #[getter]
    fn lambda1(&self) -> f64 {
        self.inner.lambda1
    }

    #[getter]
    fn lambda2(&self) -> f64 {
        self.inner.lambda2
    }

    #[getter]
    fn iterations(&self) -> Vec<usize> {
        self.inner.per_group_iterations.clone()
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged()
    }

    fn to_json(&self) -> String {
        io::estimate_json(&self.inner)
    }

    /// `(i, j, value)` for `i < j` with `|value| > threshold`.
    #[pyo3(signature = (threshold = 1e-6))]
    fn edges(&self, threshold: f64) -> Vec<(usize, usize, f64)> {
        io::edge_list(&self.inner.omega, threshold)
    }

    /// Predicts coordinates `split..p` of each row from the first `split`.
    fn predict(&self, mean: Vec<f64>, split: usize, early: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let task = PredictTask::new(split, mean, self.inner.clone()).map_err(to_py)?;
        early.iter().map(|row| task.predict(row).map_err(to_py)).collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "Estimate(p={}, groups={:?}, lambda1={}, lambda2={}, converged={})",
            self.inner.omega.dim(),
            self.inner.partition.sizes(),
            self.inner.lambda1,
            self.inner.lambda2,
            self.inner.converged()
        )
    }
}

/// Fits at fixed penalties. `method` is one of prop, mcd, glasso,
/// block-diag or banded:K.
#[pyfunction]
#[pyo3(signature = (data, groups, lambda1 = 0.0, lambda2 = 0.0, method = "prop"))]
fn fit(data: Vec<Vec<f64>>, groups: Vec<usize>, lambda1: f64, lambda2: f64, method: &str) -> PyResult<PyEstimate> {
    let d = dataset(data, groups)?;
    let cfg = FitConfig::new(lambda1, lambda2).with_method(self::method(method)?);
    let inner = estimator::fit(&d, &cfg).map_err(to_py)?;
    Ok(PyEstimate { inner })
}

/// `(lambda1, lambda2, bic, nnz, converged)`.
type BicTuple = (f64, f64, f64, usize, bool);

/// BIC search over a grid. Without explicit values the grid is generated
/// from the data. Returns the best estimate and the table rows.
#[pyfunction]
#[pyo3(signature = (data, groups, method = "prop", lambda1 = None, lambda2 = None, grid_size = DEFAULT_GRID_SIZE, min_ratio = DEFAULT_MIN_RATIO))]
fn select(
    data: Vec<Vec<f64>>,
    groups: Vec<usize>,
    method: &str,
    lambda1: Option<Vec<f64>>,
    lambda2: Option<Vec<f64>>,
    grid_size: usize,
    min_ratio: f64,
) -> PyResult<(PyEstimate, Vec<BicTuple>)> {
    let d = dataset(data, groups)?;
    let mode = self::method(method)?;
    let grid = match (lambda1, lambda2) {
        (Some(a), Some(b)) => TuningGrid::explicit(a, b),
        (None, None) => selection::auto_grid_for(&d, mode, grid_size, min_ratio),
        _ => return Err(PyValueError::new_err("give both lambda1 and lambda2 grids or neither")),
    }
    .map_err(to_py)?;
    let sel = selection::select(&d, &grid, &FitConfig::default().with_method(mode)).map_err(to_py)?;
    let table = sel.table.iter().map(|r| (r.lambda1, r.lambda2, r.bic, r.nnz, r.converged)).collect();
    Ok((PyEstimate { inner: sel.best }, table))
}

/// Scenario `id` (1..7) truth: `(omega, sigma)`.
#[pyfunction]
fn scenario_truth(id: u8, groups: Vec<usize>, seed: u64) -> PyResult<(Rows, Rows)> {
    let partition = GroupPartition::new(groups).map_err(to_py)?;
    let truth = scenario::generate(&ScenarioSpec::new(id, partition, seed)).map_err(to_py)?;
    Ok((rows(truth.omega.as_matrix()), rows(truth.sigma.as_matrix())))
}

/// `n` rows drawn from the scenario truth with the given seed.
#[pyfunction]
fn scenario_sample(id: u8, groups: Vec<usize>, n: usize, seed: u64) -> PyResult<Vec<Vec<f64>>> {
    let partition = GroupPartition::new(groups).map_err(to_py)?;
    let truth = scenario::generate(&ScenarioSpec::new(id, partition.clone(), seed)).map_err(to_py)?;
    let d = scenario::sample_mvn(&truth, n, seed, &partition).map_err(to_py)?;
    Ok(rows(d.data()))
}

/// Loss of `estimate` against a true precision matrix, keyed by metric name.
#[pyfunction]
fn losses(truth: Vec<Vec<f64>>, estimate: Vec<Vec<f64>>) -> PyResult<Vec<(String, f64)>> {
    let truth = GeneratedTruth::from_omega(SymMatrix::new(matrix(truth)?).map_err(to_py)?, 0.0).map_err(to_py)?;
    let est = SymMatrix::new(matrix(estimate)?).map_err(to_py)?;
    let report = metrics::losses(&truth, &est).map_err(to_py)?;
    Ok(METRIC_NAMES.iter().map(|n| n.to_string()).zip(report.values()).collect())
}

/// Runs the replicate harness; returns the raw and summary CSV texts.
#[pyfunction]
#[pyo3(signature = (scenario, n, groups, reps = 50, seed = 0, methods = "prop,glasso", grid_size = DEFAULT_GRID_SIZE, min_ratio = DEFAULT_MIN_RATIO))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    py: Python<'_>,
    scenario: u8,
    n: usize,
    groups: Vec<usize>,
    reps: usize,
    seed: u64,
    methods: &str,
    grid_size: usize,
    min_ratio: f64,
) -> PyResult<(String, String)> {
    let partition = GroupPartition::new(groups).map_err(to_py)?;
    let mut cfg = SimulationConfig::new(scenario, n, partition, reps, seed, SimMethod::parse_list(methods).map_err(to_py)?);
    cfg.grid_size = grid_size;
    cfg.min_ratio = min_ratio;
    let res = py.detach(|| simulation::run_simulation(&cfg)).map_err(to_py)?;
    Ok((simulation::raw_csv(&res.raw), simulation::summary_csv(scenario, &res.summary)))
}

#[pymodule]
fn pyblockchol(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyEstimate>()?;
    m.add("NotPositiveDefiniteError", m.py().get_type::<NotPositiveDefiniteError>())?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(select, m)?)?;
    m.add_function(wrap_pyfunction!(scenario_truth, m)?)?;
    m.add_function(wrap_pyfunction!(scenario_sample, m)?)?;
    m.add_function(wrap_pyfunction!(losses, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    Ok(())
}
