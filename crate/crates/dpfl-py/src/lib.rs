//! Python bindings: experiment running, reporting, trace recording, and
//! the evaluation metrics. Errors surface as `ValueError` with the crate
//! error's display text.

use std::path::Path;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use dpfl_core::harness::{self, ExperimentConfig};
use dpfl_core::metrics::{self, WindowStat};

fn err(e: dpfl_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Statistic of the trailing window `values[t+1-omega ..= t]`; `stat` is
/// `"mean"` or `"variance"`.
#[pyfunction]
fn windowed_eval(values: Vec<f64>, omega: usize, stat: &str, t: usize) -> PyResult<f64> {
    let stat = match stat {
        "mean" => WindowStat::Mean,
        "variance" => WindowStat::Variance,
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown stat '{other}' (expected mean, variance)"
            )))
        }
    };
    metrics::windowed_eval(&values, omega, stat, t).map_err(err)
}

/// Mean of `static_ref - dynamic` over rounds.
#[pyfunction]
fn intransigence(dynamic: Vec<f64>, static_ref: Vec<f64>) -> PyResult<f64> {
    metrics::intransigence(&dynamic, &static_ref).map_err(err)
}

/// Mean absolute deviation from the OLS line over `[t_s1, t_s2)`.
#[pyfunction]
fn instability(values: Vec<f64>, t_s1: usize, t_s2: usize) -> PyResult<f64> {
    metrics::instability(&values, t_s1, t_s2).map_err(err)
}

fn seed_dict<'py>(
    py: Python<'py>,
    summary: &harness::SeedSummary,
) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("seed", summary.seed)?;
    d.set_item("strategy", &summary.strategy)?;
    d.set_item("participation", &summary.participation)?;
    d.set_item("heterogeneity", &summary.heterogeneity)?;
    d.set_item("kpfl", summary.kpfl)?;
    d.set_item("we_final", summary.we_final)?;
    d.set_item("we_final_theta", summary.we_final_theta)?;
    d.set_item("idp", summary.idp)?;
    d.set_item("id_full", summary.id_full)?;
    d.set_item("id_second_half", summary.id_second_half)?;
    d.set_item("psi", summary.psi.clone())?;
    d.set_item("psi_static", summary.psi_static.clone())?;
    Ok(d)
}

/// Runs the experiment cell described by a TOML document and returns
/// `{dir, label, seeds: [{seed, we_final, idp, ...}]}`.
#[pyfunction]
fn run_experiment(py: Python<'_>, toml: &str, out_dir: &str) -> PyResult<Py<PyDict>> {
    let cfg = ExperimentConfig::from_toml_str(toml).map_err(err)?;
    let outcome = harness::run_experiment(&cfg, Path::new(out_dir)).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("dir", outcome.dir.to_string_lossy().as_ref())?;
    d.set_item("label", &outcome.label)?;
    let seeds = PyList::empty(py);
    for s in &outcome.seeds {
        seeds.append(seed_dict(py, &s.summary)?)?;
    }
    d.set_item("seeds", seeds)?;
    Ok(d.into())
}

/// Renders the text report for a directory of finished runs.
#[pyfunction]
fn render_report(dir: &str) -> PyResult<String> {
    harness::render_report(Path::new(dir)).map_err(err)
}

/// Samples the configured participation model and returns the trace CSV
/// text. `seed` defaults to the config's first seed, `rounds` to the
/// config's round count.
#[pyfunction]
#[pyo3(signature = (toml, seed=None, rounds=None))]
fn record_trace(toml: &str, seed: Option<u64>, rounds: Option<usize>) -> PyResult<String> {
    let cfg = ExperimentConfig::from_toml_str(toml).map_err(err)?;
    let seed = seed.unwrap_or(cfg.seeds[0]);
    let rounds = rounds.unwrap_or(cfg.rounds);
    harness::record_trace(&cfg, seed, rounds)
        .map(|t| t.to_csv_string())
        .map_err(err)
}

#[pymodule]
fn dpfl_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(windowed_eval, m)?)?;
    m.add_function(wrap_pyfunction!(intransigence, m)?)?;
    m.add_function(wrap_pyfunction!(instability, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(render_report, m)?)?;
    m.add_function(wrap_pyfunction!(record_trace, m)?)?;
    Ok(())
}
