#![allow(clippy::useless_conversion)]

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use wasmfx::bench::{run_bench, BenchParams};
use wasmfx::corpus::corpus_cases;
use wasmfx::meta::Engine;
use wasmfx::validate::validate_module;
use wasmfx::{parse_script, print_module, DriverOptions, ModuleDef};

/// A parsed module.
#[pyclass(name = "Module", frozen)]
struct PyModuleDef {
    inner: ModuleDef,
}

#[pymethods]
impl PyModuleDef {
    /// Parses a module, optionally followed by `(invoke ...)` forms.
    #[staticmethod]
    fn parse(source: &str) -> PyResult<Self> {
        let (inner, _) = parse_script(source).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(PyModuleDef { inner })
    }

    /// Type errors, one string each; empty when the module is valid.
    fn validate(&self) -> Vec<String> {
        match validate_module(&self.inner) {
            Ok(()) => vec![],
            Err(errors) => errors.iter().map(ToString::to_string).collect(),
        }
    }

    fn print(&self) -> String {
        print_module(&self.inner)
    }

    /// Function names, with `None` for unnamed functions.
    #[getter]
    fn functions(&self) -> Vec<Option<String>> {
        self.inner.funcs.iter().map(|f| f.name.clone()).collect()
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        format!(
            "Module(types={}, tags={}, funcs={})",
            self.inner.types.len(),
            self.inner.tags.len(),
            self.inner.funcs.len()
        )
    }
}

/// Outcome of running a script.
#[pyclass(name = "Execution", frozen, get_all)]
struct PyExecution {
    stdout: String,
    stderr: String,
    exit_code: i32,
    steps: u64,
    resumes: u64,
    suspends: u64,
    cont_allocs: u64,
}

#[pymethods]
impl PyExecution {
    fn __repr__(&self) -> String {
        format!("Execution(exit_code={}, stdout={:?})", self.exit_code, self.stdout)
    }
}

/// Parses, validates and runs a script.
#[pyfunction]
#[pyo3(signature = (source, invoke=None, args=vec![], fuel=wasmfx::interp::DEFAULT_FUEL, audit=false, check_soundness=false))]
fn run(
    source: &str,
    invoke: Option<String>,
    args: Vec<String>,
    fuel: u64,
    audit: bool,
    check_soundness: bool,
) -> PyExecution {
    let opts = DriverOptions {
        invoke,
        args,
        fuel,
        check_soundness,
        engine: if audit { Engine::Audit } else { Engine::Machine },
        ..DriverOptions::default()
    };
    let e = wasmfx::execute(source, &opts);
    PyExecution {
        stdout: e.stdout,
        stderr: e.stderr,
        exit_code: e.exit.code(),
        steps: e.stats.steps,
        resumes: e.stats.resumes,
        suspends: e.stats.suspends,
        cont_allocs: e.stats.cont_allocs,
    }
}

/// Golden cases as `(name, source, expected_stdout, expected_exit_code)`.
#[pyfunction]
fn corpus() -> Vec<(String, String, String, i32)> {
    corpus_cases()
        .into_iter()
        .map(|c| {
            (
                c.name().to_string(),
                c.source.to_string(),
                c.expected_stdout.clone(),
                c.expected_exit.code(),
            )
        })
        .collect()
}

/// Runs the coroutine benchmark and returns its `key: value` report as a
/// list of pairs.
#[pyfunction]
#[pyo3(name = "bench", signature = (coroutines, requests, work, fuel=wasmfx::interp::DEFAULT_FUEL))]
fn run_benchmark(coroutines: u32, requests: u32, work: u32, fuel: u64) -> PyResult<Vec<(String, String)>> {
    let params = BenchParams {
        coroutines,
        requests,
        work,
    };
    let report = run_bench(params, fuel).map_err(|r| PyRuntimeError::new_err(format!("{r:?}")))?;
    Ok(report
        .lines()
        .into_iter()
        .filter_map(|l| l.split_once(": ").map(|(k, v)| (k.to_string(), v.to_string())))
        .collect())
}

#[pymodule]
fn wasmfx_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModuleDef>()?;
    m.add_class::<PyExecution>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(corpus, m)?)?;
    m.add_function(wrap_pyfunction!(run_benchmark, m)?)?;
    Ok(())
}
