//! Python bindings. Configs and results cross the boundary as JSON strings;
//! matrices as nested lists (row-major).

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use semtrack_core::policy::{compute_drift_constants, solve_agent as core_solve_agent, PolicyParams, TieRule};
use semtrack_core::rng::{stream_rng, Stream};
use semtrack_core::sim::{self, CalibrationMode, EpisodeContext, EpisodeOptions, SimConfig, SweepAxis};
use semtrack_core::stability::{stability_report, DEFAULT_MASK_TOL};
use semtrack_core::Matrix;

fn to_py(e: semtrack_core::Error) -> PyErr {
    if e.is_numeric() {
        PyRuntimeError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn parse_config(json: &str) -> PyResult<SimConfig> {
    let c: SimConfig = serde_json::from_str(json).map_err(|e| PyValueError::new_err(format!("config: {e}")))?;
    c.validate().map_err(to_py)?;
    Ok(c)
}

fn dump<T: serde::Serialize>(v: &T) -> PyResult<String> {
    serde_json::to_string(v).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

fn matrix(rows: Vec<Vec<f64>>, what: &str) -> PyResult<Matrix> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 || rows.iter().any(|row| row.len() != c) {
        return Err(PyValueError::new_err(format!("{what}: expected a non-empty rectangular matrix")));
    }
    Ok(Matrix::from_row_iterator(r, c, rows.into_iter().flatten()))
}

fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Config JSON with every default filled in.
#[pyfunction]
fn default_config(agents: usize, d: usize, n_t: usize, n_r: usize) -> PyResult<String> {
    dump(&SimConfig::new(agents, d, n_t, n_r))
}

/// Runs one episode of `config["scheme"]` and returns the metrics as JSON.
#[pyfunction]
#[pyo3(signature = (config_json, record_decisions = false))]
fn run_episode(py: Python<'_>, config_json: &str, record_decisions: bool) -> PyResult<String> {
    let config = parse_config(config_json)?;
    let m = py
        .detach(|| {
            let topo = sim::build_topology(&config)?;
            let ctx = EpisodeContext::new(&config, topo)?.with_static_gain(&config)?;
            sim::run_episode_with(&ctx, &config, EpisodeOptions { record_decisions, no_trajectory: false })
        })
        .map_err(to_py)?;
    dump(&m)
}

#[pyfunction]
#[pyo3(signature = (config_json, clamp = true))]
fn calibrate_gamma(py: Python<'_>, config_json: &str, clamp: bool) -> PyResult<String> {
    let config = parse_config(config_json)?;
    let mode = if clamp { CalibrationMode::Clamp } else { CalibrationMode::Strict };
    let cal = py
        .detach(|| {
            let topo = sim::build_topology(&config)?;
            sim::calibrate_gamma(&config, &topo, config.power_dbw, config.n_probe_seeds, mode)
        })
        .map_err(to_py)?;
    dump(&cal)
}

#[pyfunction]
fn run_sweep(py: Python<'_>, config_json: &str, axis: &str, values: Vec<f64>, seeds: Vec<u64>) -> PyResult<String> {
    let config = parse_config(config_json)?;
    let axis: SweepAxis = axis.parse().map_err(to_py)?;
    let result = py.detach(|| sim::run_sweep(&config, axis, &values, &seeds)).map_err(to_py)?;
    dump(&result)
}

#[pyfunction]
#[pyo3(signature = (config_json, draws = 100, mask_tol = DEFAULT_MASK_TOL))]
fn check_stability(config_json: &str, draws: usize, mask_tol: f64) -> PyResult<String> {
    let config = parse_config(config_json)?;
    let topo = sim::build_topology(&config).map_err(to_py)?;
    let ctx = EpisodeContext::new(&config, topo).map_err(to_py)?;
    let mut rng = stream_rng(config.seed, Stream::Stability, 0);
    let report = stability_report(&ctx.topology, ctx.drift.alpha, draws, mask_tol, &mut rng).map_err(to_py)?;
    dump(&report)
}

/// `(pi, alpha)` for transition matrices `A` and `G`.
#[pyfunction]
fn drift_constants(a: Vec<Vec<f64>>, g: Vec<Vec<f64>>) -> PyResult<(Vec<f64>, f64)> {
    let dc = compute_drift_constants(&matrix(a, "A")?, &matrix(g, "G")?, TieRule::Smaller).map_err(to_py)?;
    Ok((dc.pi, dc.alpha))
}

/// Closed-form decision for one agent: `(delta, gain, threshold, objective)`.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
fn solve_agent(
    sigma: Vec<Vec<f64>>,
    b_hat: Vec<Vec<f64>>,
    h: Vec<Vec<f64>>,
    a: Vec<Vec<f64>>,
    g: Vec<Vec<f64>>,
    p_on: f64,
    gamma: f64,
    agents: usize,
) -> PyResult<(bool, Vec<Vec<f64>>, f64, f64)> {
    let dc = compute_drift_constants(&matrix(a, "A")?, &matrix(g, "G")?, TieRule::Smaller).map_err(to_py)?;
    let params = PolicyParams { p_on, gamma, ..PolicyParams::default() };
    let dec = core_solve_agent(&matrix(sigma, "sigma")?, &matrix(b_hat, "b_hat")?, &matrix(h, "h")?, &dc, &params, agents)
        .map_err(to_py)?;
    Ok((dec.delta, rows(&dec.gain), dec.threshold, dec.objective))
}

#[pymodule]
fn semtrack(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    m.add_function(wrap_pyfunction!(run_episode, m)?)?;
    m.add_function(wrap_pyfunction!(calibrate_gamma, m)?)?;
    m.add_function(wrap_pyfunction!(run_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(check_stability, m)?)?;
    m.add_function(wrap_pyfunction!(drift_constants, m)?)?;
    m.add_function(wrap_pyfunction!(solve_agent, m)?)?;
    Ok(())
}
