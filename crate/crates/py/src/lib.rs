use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyModule;

use gridplan::evaluation::EvalOptions;
use gridplan::harness::{brute_force_oracle, DEFAULT_ORACLE_BITS};
use gridplan::heuristics::{run_heuristic, Algo, AlgoParams, Budget, Problem, RunOptions};
use gridplan::io;
use gridplan::measures::{build_catalog, CatalogConfig, Candidate};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Hands a serializable value to Python as plain dicts and lists.
fn to_py<T: serde::Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(value_err)?;
    let json = PyModule::import(py, "json")?;
    Ok(json.call_method1("loads", (text,))?.unbind())
}

/// A planning problem loaded from a grid file and an optional load-case file.
#[pyclass(name = "Problem", module = "pygridplan", frozen)]
struct PyProblem {
    inner: Problem,
}

#[pymethods]
impl PyProblem {
    #[new]
    #[pyo3(signature = (grid, load_cases=None))]
    fn new(grid: PathBuf, load_cases: Option<PathBuf>) -> PyResult<Self> {
        let io_err = |e: io::IoError| PyIOError::new_err(e.to_string());
        let grid = io::load_grid(&grid).map_err(io_err)?;
        let cases = match load_cases {
            Some(p) => io::load_load_cases(&p).map_err(io_err)?,
            None => Vec::new(),
        };
        let catalog = build_catalog(&grid, &CatalogConfig::default()).map_err(value_err)?;
        let inner = Problem::new(grid, cases, catalog, EvalOptions::default());
        inner.validate().map_err(value_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn n_measures(&self) -> usize {
        self.inner.catalog.len()
    }

    /// Catalog entries as dicts (`index`, `kind`, `invest_cost`, ...).
    fn measures(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner.catalog.measures())
    }

    /// Evaluates a candidate given as a sequence of 0/1 values.
    fn evaluate(&self, py: Python<'_>, bits: Vec<u8>) -> PyResult<Py<PyAny>> {
        if bits.iter().any(|&b| b > 1) {
            return Err(PyValueError::new_err("bits must be 0 or 1"));
        }
        let bits: Vec<bool> = bits.into_iter().map(|b| b == 1).collect();
        if bits.len() != self.inner.catalog.len() {
            return Err(PyValueError::new_err(format!(
                "expected {} bits, got {}",
                self.inner.catalog.len(),
                bits.len()
            )));
        }
        let problem = &self.inner;
        let result = py
            .detach(|| problem.evaluate(&Candidate::from_bits(bits)))
            .map_err(value_err)?;
        to_py(py, &result)
    }

    /// Runs one algorithm with default parameters and returns the run record.
    #[pyo3(signature = (algorithm, seed, eval_limit=None, powerflow_limit=None, time_limit_s=None))]
    fn run(
        &self,
        py: Python<'_>,
        algorithm: &str,
        seed: u64,
        eval_limit: Option<u64>,
        powerflow_limit: Option<u64>,
        time_limit_s: Option<f64>,
    ) -> PyResult<Py<PyAny>> {
        let algo: Algo = algorithm.parse().map_err(PyValueError::new_err)?;
        let budget = Budget {
            time_limit_s,
            eval_limit,
            powerflow_limit,
        };
        let problem = &self.inner;
        let record = py
            .detach(|| {
                run_heuristic(algo, &AlgoParams::default(), problem, &budget, &RunOptions::default(), seed)
            })
            .map_err(value_err)?;
        to_py(py, &record)
    }

    /// Exhaustive search; only for catalogs of at most 20 measures.
    fn oracle(&self, py: Python<'_>) -> PyResult<(Vec<bool>, Py<PyAny>)> {
        let problem = &self.inner;
        let best = py
            .detach(|| brute_force_oracle(problem, DEFAULT_ORACLE_BITS))
            .map_err(value_err)?;
        Ok((best.candidate.bits().to_vec(), to_py(py, &best.result)?))
    }
}

#[pymodule]
fn pygridplan(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyProblem>()?;
    m.add("ALGORITHMS", Algo::ALL.map(Algo::as_str).to_vec())?;
    Ok(())
}
