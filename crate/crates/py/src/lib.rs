//! Python bindings.

use pyo3::exceptions::{PyKeyError, PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use firstpass::cli::config::{load_config, Method, RunConfig};
use firstpass::cli::preset::preset;
use firstpass::cli::run::{run, EstimateRow, Problem, RunReport};
use firstpass::error::Error;
use firstpass::fdmis::fdmis_estimate;
use firstpass::reliability::isee_estimate;
use firstpass::sampling::{default_workers, SamplerConfig};
use firstpass::sdm::{importance_pmf, sdm_estimate, ParameterMap};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyOSError::new_err(e.to_string()),
        Error::UnknownParameter(_) => PyKeyError::new_err(e.to_string()),
        Error::Integration(_) | Error::Eigen(_) | Error::Singular(_) => PyRuntimeError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn method_name(m: Method) -> &'static str {
    match m {
        Method::Isee => "isee",
        Method::Sdm => "sdm",
        Method::Fdmis => "fdmis",
    }
}

/// Run configuration: model, excitation, grid, thresholds and estimator settings.
#[pyclass(name = "RunConfig", module = "firstpass", skip_from_py_object)]
#[derive(Clone)]
struct PyRunConfig {
    inner: RunConfig,
}

#[pymethods]
impl PyRunConfig {
    #[staticmethod]
    #[pyo3(signature = (name, case = 1))]
    fn preset(name: &str, case: usize) -> PyResult<Self> {
        Ok(Self {
            inner: preset(name, case).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: RunConfig::from_json(text).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: load_config(path).map_err(to_py)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(to_py)
    }

    #[getter]
    fn method(&self) -> &'static str {
        method_name(self.inner.estimator.method)
    }
    #[setter]
    fn set_method(&mut self, m: &str) -> PyResult<()> {
        self.inner.estimator.method = m.parse().map_err(to_py)?;
        Ok(())
    }
    #[getter]
    fn tol(&self) -> f64 {
        self.inner.estimator.tol
    }
    #[setter]
    fn set_tol(&mut self, v: f64) {
        self.inner.estimator.tol = v;
    }
    #[getter]
    fn n_max(&self) -> usize {
        self.inner.estimator.n_max
    }
    #[setter]
    fn set_n_max(&mut self, v: usize) {
        self.inner.estimator.n_max = v;
    }
    #[getter]
    fn seed(&self) -> u64 {
        self.inner.estimator.seed
    }
    #[setter]
    fn set_seed(&mut self, v: u64) {
        self.inner.estimator.seed = v;
    }
    #[getter]
    fn thresholds(&self) -> Vec<f64> {
        self.inner.thresholds.c.clone()
    }
    #[getter]
    fn parameters(&self) -> Vec<String> {
        self.inner.parameters.clone()
    }
    #[setter]
    fn set_parameters(&mut self, v: Vec<String>) {
        self.inner.parameters = v;
    }

    fn __repr__(&self) -> String {
        format!(
            "RunConfig(method={:?}, tol={}, n_max={}, seed={}, thresholds={})",
            self.method(),
            self.tol(),
            self.n_max(),
            self.seed(),
            self.inner.thresholds.c.len()
        )
    }
}

fn estimate_dict<'py>(py: Python<'py>, e: &EstimateRow) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("parameter", &e.parameter)?;
    d.set_item("value", e.value)?;
    d.set_item("cov", e.cov)?;
    d.set_item("n_evals", e.n_evals)?;
    d.set_item("converged", e.converged)?;
    Ok(d)
}

/// Result of [`run`].
#[pyclass(name = "RunReport", module = "firstpass")]
struct PyRunReport {
    inner: RunReport,
}

#[pymethods]
impl PyRunReport {
    #[getter]
    fn method(&self) -> &'static str {
        method_name(self.inner.method)
    }
    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged()
    }
    #[getter]
    fn wall_time_s(&self) -> f64 {
        self.inner.wall_time_s
    }
    #[getter]
    fn components(&self) -> usize {
        self.inner.components
    }
    #[getter]
    fn warnings(&self) -> Vec<String> {
        self.inner.warnings.clone()
    }
    /// `(impulse_runs, sensitivity_runs)`.
    #[getter]
    fn counters(&self) -> (usize, usize) {
        (self.inner.counters.impulse_runs, self.inner.counters.sensitivity_runs)
    }
    #[getter]
    fn estimates<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        self.inner.estimates.iter().map(|e| estimate_dict(py, e)).collect()
    }
    /// Running `(j, parameter, mean, cov)` rows.
    #[getter]
    fn history(&self) -> Vec<(usize, String, f64, f64)> {
        self.inner
            .history
            .iter()
            .map(|h| (h.j, h.parameter.clone(), h.mu_j, h.delta_j))
            .collect()
    }
    /// Estimated value for `parameter` (`"probability"` for reliability runs).
    fn value(&self, parameter: &str) -> PyResult<f64> {
        self.inner
            .estimates
            .iter()
            .find(|e| e.parameter == parameter)
            .map(|e| e.value)
            .ok_or_else(|| PyKeyError::new_err(parameter.to_string()))
    }
}

/// Runs the configured estimator. The GIL is released while sampling.
#[pyfunction]
#[pyo3(name = "run", signature = (config, workers = None))]
fn py_run(py: Python<'_>, config: &PyRunConfig, workers: Option<usize>) -> PyResult<PyRunReport> {
    let cfg = config.inner.clone();
    let workers = workers.filter(|w| *w > 0).unwrap_or_else(default_workers);
    let inner = py.detach(|| run(&cfg, workers)).map_err(to_py)?;
    Ok(PyRunReport { inner })
}

/// Assembled limit-state problem: impulse run, coefficient map and component table.
#[pyclass(name = "Problem", module = "firstpass")]
struct PyProblem {
    inner: Problem,
    config: RunConfig,
}

fn sampler(tol: f64, n_max: usize, seed: u64, workers: Option<usize>) -> SamplerConfig {
    SamplerConfig {
        tol,
        n_max,
        seed,
        workers: workers.filter(|w| *w > 0).unwrap_or_else(default_workers),
        ..Default::default()
    }
}

#[pymethods]
impl PyProblem {
    #[new]
    fn new(py: Python<'_>, config: &PyRunConfig) -> PyResult<Self> {
        let cfg = config.inner.clone();
        let inner = py.detach(|| Problem::build(&cfg)).map_err(to_py)?;
        Ok(Self { inner, config: cfg })
    }

    #[getter]
    fn observers(&self) -> usize {
        self.inner.map().observers()
    }
    #[getter]
    fn steps(&self) -> usize {
        self.inner.map().steps()
    }
    #[getter]
    fn dim(&self) -> usize {
        self.inner.map().dim()
    }
    #[getter]
    fn component_count(&self) -> usize {
        self.inner.table().len()
    }
    /// Sum of the component failure probabilities.
    #[getter]
    fn total_probability(&self) -> f64 {
        self.inner.table().total_prob()
    }
    #[getter]
    fn min_beta(&self) -> f64 {
        self.inner.table().min_beta()
    }

    fn parameter_names(&self) -> Vec<String> {
        self.inner.parameter_names()
    }

    /// Coefficient norms `|a_i|`, one list per observer.
    fn norms(&self) -> Vec<Vec<f64>> {
        self.inner.map().norms()
    }

    /// Responses at the standard normal point `x`, one list per observer.
    fn responses(&self, x: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        self.inner.map().responses(&x).map_err(to_py)
    }

    #[pyo3(signature = (tol = 0.1, n_max = 10_000, seed = 0, workers = None))]
    fn isee<'py>(
        &self,
        py: Python<'py>,
        tol: f64,
        n_max: usize,
        seed: u64,
        workers: Option<usize>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let cfg = sampler(tol, n_max, seed, workers);
        let est = py.detach(|| isee_estimate(&self.inner.system(), &cfg)).map_err(to_py)?;
        let d = PyDict::new(py);
        d.set_item("value", est.value)?;
        d.set_item("cov", est.cov)?;
        d.set_item("n_samples", est.n_samples)?;
        d.set_item("n_evals", est.n_evals)?;
        d.set_item("converged", est.converged)?;
        Ok(d)
    }

    /// Sensitivities of the failure probability; returns `{name: estimate}`.
    #[pyo3(signature = (parameters = None, tol = 0.1, n_max = 10_000, seed = 0, workers = None))]
    fn sdm<'py>(
        &mut self,
        py: Python<'py>,
        parameters: Option<Vec<String>>,
        tol: f64,
        n_max: usize,
        seed: u64,
        workers: Option<usize>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let names = parameters.unwrap_or_else(|| self.inner.parameter_names());
        let cfg = sampler(tol, n_max, seed, workers);
        let inner = &mut self.inner;
        let est = py
            .detach(|| {
                let maps = names
                    .iter()
                    .map(|n| inner.sensitivity_map(n))
                    .collect::<Result<Vec<_>, _>>()?;
                let params: Vec<ParameterMap> =
                    names.iter().zip(&maps).map(|(name, map)| ParameterMap { name, map }).collect();
                let pmf = importance_pmf(inner.table())?;
                sdm_estimate(&inner.system(), &pmf, &params, &cfg)
            })
            .map_err(to_py)?;
        let out = PyDict::new(py);
        for p in &est.parameters {
            let row = EstimateRow {
                parameter: p.name.clone(),
                value: p.mean,
                cov: p.cov,
                n_evals: est.n_evals,
                converged: p.converged,
            };
            out.set_item(&p.name, estimate_dict(py, &row)?)?;
        }
        Ok(out)
    }

    /// Finite-difference reference for one parameter.
    #[pyo3(signature = (parameter, rel_step = 1e-3, tol = 0.02, n_max = 1_000_000, seed = 0, workers = None))]
    #[allow(clippy::too_many_arguments)]
    fn fdmis<'py>(
        &mut self,
        py: Python<'py>,
        parameter: &str,
        rel_step: f64,
        tol: f64,
        n_max: usize,
        seed: u64,
        workers: Option<usize>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let cfg = sampler(tol, n_max, seed, workers);
        let (inner, config) = (&mut self.inner, &self.config);
        let est = py
            .detach(|| {
                let pair = inner.perturbed_pair(parameter, rel_step, config)?;
                fdmis_estimate(&pair, &cfg)
            })
            .map_err(to_py)?;
        let row = EstimateRow {
            parameter: parameter.to_string(),
            value: est.value,
            cov: est.cov,
            n_evals: est.n_evals,
            converged: est.converged,
        };
        estimate_dict(py, &row)
    }
}

#[pymodule]
#[pyo3(name = "firstpass")]
fn firstpass_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRunConfig>()?;
    m.add_class::<PyRunReport>()?;
    m.add_class::<PyProblem>()?;
    m.add_function(wrap_pyfunction!(py_run, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
