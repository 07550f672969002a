//! Python bindings. Every entry point takes a TOML run configuration as a
//! string and returns plain Python objects; nothing is written to disk.

use cds_cva::config::{Overrides, RunConfig};
use cds_cva::factors::{affine_transform, CirParams};
use cds_cva::{harness, Error};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use serde::Serialize;

fn to_py(err: Error) -> PyErr {
    PyValueError::new_err(harness::error_json(&err).to_string())
}

fn to_python<'py>(py: Python<'py>, value: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn load(
    config: &str,
    seed: Option<u64>,
    paths: Option<usize>,
    grid_step: Option<f64>,
    outer_paths: Option<usize>,
    inner_paths: Option<usize>,
) -> PyResult<RunConfig> {
    let overrides = Overrides {
        seed,
        paths,
        grid_step,
        out_dir: None,
        outer_paths,
        inner_paths,
    };
    RunConfig::from_toml_str(config, &overrides).map_err(to_py)
}

/// Clean fair spread and risky annuity at time zero.
#[pyfunction]
fn clean_spread(py: Python<'_>, config: &str) -> PyResult<Py<PyAny>> {
    let config = load(config, None, None, None, None, None)?;
    let engine = config.engine().map_err(to_py)?;
    let out = serde_json::json!({ "kappa0": engine.kappa0(), "rdv01": engine.rdv01() });
    Ok(to_python(py, &out)?.unbind())
}

/// Spreads, SVA and CVA decomposition for the configured agreement.
#[pyfunction]
#[pyo3(signature = (config, seed=None, paths=None, grid_step=None))]
fn price(
    py: Python<'_>,
    config: &str,
    seed: Option<u64>,
    paths: Option<usize>,
    grid_step: Option<f64>,
) -> PyResult<Py<PyAny>> {
    let config = load(config, seed, paths, grid_step, None, None)?;
    let out = py.detach(|| harness::price_report(&config)).map_err(to_py)?;
    Ok(to_python(py, &out)?.unbind())
}

/// CVA, UCVA, DVA and spread reports for every case on shared paths.
#[pyfunction]
#[pyo3(signature = (config, seed=None, paths=None, grid_step=None))]
fn case_table(
    py: Python<'_>,
    config: &str,
    seed: Option<u64>,
    paths: Option<usize>,
    grid_step: Option<f64>,
) -> PyResult<Py<PyAny>> {
    let config = load(config, seed, paths, grid_step, None, None)?;
    let rows = py.detach(|| harness::case_rows(&config)).map_err(to_py)?;
    Ok(to_python(py, &rows)?.unbind())
}

/// EPE/ENE/collateral buckets keyed by case label ("" for the configured
/// agreement).
#[pyfunction]
#[pyo3(signature = (config, all_cases=false, seed=None, paths=None, grid_step=None))]
fn profiles(
    py: Python<'_>,
    config: &str,
    all_cases: bool,
    seed: Option<u64>,
    paths: Option<usize>,
    grid_step: Option<f64>,
) -> PyResult<Py<PyAny>> {
    let config = load(config, seed, paths, grid_step, None, None)?;
    let tables = py
        .detach(|| harness::profile_tables(&config, all_cases))
        .map_err(to_py)?;
    let map: serde_json::Map<_, _> = tables
        .into_iter()
        .map(|(label, b)| (label, serde_json::to_value(b).expect("buckets serialize")))
        .collect();
    Ok(to_python(py, &map)?.unbind())
}

/// Mean forward CVA curves keyed by case label.
#[pyfunction]
#[pyo3(signature = (config, all_cases=false, seed=None, grid_step=None, outer_paths=None, inner_paths=None))]
fn forward_cva(
    py: Python<'_>,
    config: &str,
    all_cases: bool,
    seed: Option<u64>,
    grid_step: Option<f64>,
    outer_paths: Option<usize>,
    inner_paths: Option<usize>,
) -> PyResult<Py<PyAny>> {
    let config = load(config, seed, None, grid_step, outer_paths, inner_paths)?;
    let curves = py
        .detach(|| harness::forward_curves(&config, all_cases))
        .map_err(to_py)?;
    let map: serde_json::Map<_, _> = curves
        .into_iter()
        .map(|(label, p)| (label, serde_json::to_value(p).expect("points serialize")))
        .collect();
    Ok(to_python(py, &map)?.unbind())
}

/// `E[exp(-int_0^h (shift + X_s) ds)]` for a CIR factor started at `x0`.
#[pyfunction]
#[pyo3(signature = (zeta, mu, sigma, x0, horizon, shift=0.0))]
fn cir_survival(zeta: f64, mu: f64, sigma: f64, x0: f64, horizon: f64, shift: f64) -> PyResult<f64> {
    let p = CirParams::new(zeta, mu, sigma, x0).map_err(to_py)?;
    affine_transform(&p, shift, 0.0, horizon, x0).map_err(to_py)
}

#[pymodule]
fn cdscva(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(clean_spread, m)?)?;
    m.add_function(wrap_pyfunction!(price, m)?)?;
    m.add_function(wrap_pyfunction!(case_table, m)?)?;
    m.add_function(wrap_pyfunction!(profiles, m)?)?;
    m.add_function(wrap_pyfunction!(forward_cva, m)?)?;
    m.add_function(wrap_pyfunction!(cir_survival, m)?)?;
    Ok(())
}
