//! Python bindings. Configuration errors raise `ValueError`, everything else `RuntimeError`.

use hyfft::oracle::{fft_radix2, unscramble};
use hyfft::processor::{self, run_with, RunOptions};
use hyfft::{bitperm, ComplexSample, Error, Mode, PlanConfig};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Domain(_) | Error::Config(_) | Error::ModeUnsupported { .. } | Error::SearchFailure { .. } => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn config(len: u64, mode: &str, parallelism: usize, k: usize, extended_range: bool) -> PyResult<PlanConfig> {
    let mode: Mode = mode.parse().map_err(py_err)?;
    Ok(PlanConfig::new(len, k, parallelism, mode).with_extended_range(extended_range))
}

/// Radix exponent of each stage for an `n_len`-point transform.
#[pyfunction]
#[pyo3(signature = (n_len, k = 5))]
fn stage_radices(n_len: u64, k: usize) -> PyResult<Vec<usize>> {
    processor::stage_radices(n_len, k).map_err(py_err)
}

/// Bit-reversal width read at stage `s` in pipeline mode.
#[pyfunction]
#[pyo3(signature = (n_len, s, k = 5, parallelism = 1))]
fn w_pipeline(n_len: u64, s: usize, k: usize, parallelism: usize) -> PyResult<usize> {
    bitperm::w_pipeline(n_len, s, k, parallelism).map_err(py_err)
}

/// `(w, w_tilde)` of stage `s` in memory mode.
#[pyfunction]
#[pyo3(signature = (n_len, s, k = 5, parallelism = 1))]
fn w_membased(n_len: u64, s: usize, k: usize, parallelism: usize) -> PyResult<(usize, usize)> {
    bitperm::w_membased(n_len, s, k, parallelism).map_err(py_err)
}

type TableRow = (usize, usize, Vec<(u64, u64)>);

/// Rows `(n mod k, n, [(h, l), ...])` of the reshuffle table of a stage.
#[pyfunction]
#[pyo3(signature = (k = 5, parallelism = 1, stage = 1))]
fn sigma3_table(k: usize, parallelism: usize, stage: usize) -> PyResult<Vec<TableRow>> {
    let rows = processor::sigma3_table(k, parallelism, stage).map_err(py_err)?;
    Ok(rows
        .into_iter()
        .map(|(r, n, steps)| (r, n, steps.iter().map(|s| (s.h, s.l)).collect()))
        .collect())
}

/// Simulates one transform of `samples`.
///
/// Returns `(spectrum, raw, report_json)`: the spectrum in natural order,
/// the hardware output order and the run report.
#[pyfunction]
#[pyo3(signature = (samples, mode = "pipeline", parallelism = 1, k = 5, extended_range = false))]
fn run(
    samples: Vec<ComplexSample>,
    mode: &str,
    parallelism: usize,
    k: usize,
    extended_range: bool,
) -> PyResult<(Vec<ComplexSample>, Vec<ComplexSample>, String)> {
    let cfg = config(samples.len() as u64, mode, parallelism, k, extended_range)?;
    let mut out = run_with(&cfg, &[samples], &RunOptions::default()).map_err(py_err)?;
    let raw = out.outputs.remove(0);
    let natural = unscramble(&raw, &out.plan.output_permutation).map_err(py_err)?;
    let report = serde_json::to_string(&out.report).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok((natural, raw, report))
}

/// Reference FFT (radix-2) in natural order.
#[pyfunction]
fn dft(samples: Vec<ComplexSample>) -> PyResult<Vec<ComplexSample>> {
    fft_radix2(&samples).map_err(py_err)
}

/// Closed-form iteration count, cycle count and utilization.
#[pyfunction]
#[pyo3(signature = (n_len, mode = "pipeline", parallelism = 1, k = 5, extended_range = false))]
fn metrics<'py>(
    py: Python<'py>,
    n_len: u64,
    mode: &str,
    parallelism: usize,
    k: usize,
    extended_range: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let m = processor::metrics(&config(n_len, mode, parallelism, k, extended_range)?).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("iterations", m.iterations)?;
    d.set_item("lanes", m.lanes)?;
    d.set_item("cycles_model", m.cycles_model)?;
    d.set_item("utilization", m.utilization)?;
    Ok(d)
}

#[pymodule]
fn pyhyfft(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(stage_radices, m)?)?;
    m.add_function(wrap_pyfunction!(w_pipeline, m)?)?;
    m.add_function(wrap_pyfunction!(w_membased, m)?)?;
    m.add_function(wrap_pyfunction!(sigma3_table, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(dft, m)?)?;
    m.add_function(wrap_pyfunction!(metrics, m)?)?;
    Ok(())
}
