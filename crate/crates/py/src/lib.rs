use pyo3::create_exception;
use pyo3::exceptions::{PyArithmeticError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use cvqkd_core::config::{ConfigMap, Param, RunConfig};
use cvqkd_core::driver::{self, Axis, PointReport};
use cvqkd_core::gaussian::{channel_output_covariance, TwoModeCovariance};
use cvqkd_core::mc::{simulate as mc_simulate, SimConfig};
use cvqkd_core::postselection::{self, FilterConfig, QuadratureConfig};
use cvqkd_core::Error;

create_exception!(cvqkd, ConfigError, PyValueError);
create_exception!(cvqkd, ConvergenceError, PyArithmeticError);
create_exception!(cvqkd, NotSecureError, PyRuntimeError);

fn to_py(e: Error) -> PyErr {
    let msg = e.to_string();
    match e.exit_code() {
        2 => ConfigError::new_err(msg),
        3 => ConvergenceError::new_err(msg),
        _ if matches!(e.root(), Error::NotSecure(_)) => NotSecureError::new_err(msg),
        _ => PyRuntimeError::new_err(msg),
    }
}

fn load(config: &str, overrides: Option<Vec<String>>) -> PyResult<RunConfig> {
    let mut map = ConfigMap::parse(config).map_err(to_py)?;
    for o in overrides.unwrap_or_default() {
        map.apply_override(&o).map_err(to_py)?;
    }
    RunConfig::from_map(&map).map_err(to_py)
}

fn report_dict<'py>(py: Python<'py>, r: &PointReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("distance_km", r.distance_km)?;
    d.set_item("transmissivity", r.transmissivity)?;
    d.set_item("chi", r.chi)?;
    d.set_item("gain", r.filter.gain)?;
    d.set_item("cutoff", r.filter.cutoff)?;
    d.set_item("kappa", r.filter.kappa())?;
    d.set_item("regime", driver::regime_name(r.key.regime))?;
    d.set_item("covariance", (r.m_ps.a, r.m_ps.b, r.m_ps.c))?;
    d.set_item("p_s", r.key.success_probability)?;
    d.set_item("i_ab", r.info.i_ab)?;
    d.set_item("chi_e", r.info.chi_e)?;
    d.set_item("k_asym", r.key.k_asym)?;
    d.set_item("k_fs", r.key.k_fs)?;
    d.set_item("secure", r.key.secure)?;
    Ok(d)
}

/// Key rate at the operating point described by a config text.
#[pyfunction]
#[pyo3(signature = (config, overrides=None))]
fn key_rate<'py>(py: Python<'py>, config: &str, overrides: Option<Vec<String>>) -> PyResult<Bound<'py, PyDict>> {
    let cfg = load(config, overrides)?;
    let r = py.detach(|| driver::evaluate_point(&cfg)).map_err(to_py)?;
    report_dict(py, &r)
}

#[pyfunction]
#[pyo3(signature = (config, vary, overrides=None))]
fn optimize<'py>(
    py: Python<'py>,
    config: &str,
    vary: &str,
    overrides: Option<Vec<String>>,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = load(config, overrides)?;
    let vary = Param::parse_list(vary).map_err(to_py)?;
    let best = py.detach(|| driver::optimize(&cfg, &vary)).map_err(to_py)?;
    let r = match best.report {
        Some(r) => r,
        None => driver::evaluate_point(&best.config).map_err(to_py)?,
    };
    report_dict(py, &r)
}

/// Largest secure distance in km.
#[pyfunction]
#[pyo3(signature = (config, overrides=None))]
fn max_distance(py: Python<'_>, config: &str, overrides: Option<Vec<String>>) -> PyResult<f64> {
    let cfg = load(config, overrides)?;
    py.detach(|| driver::max_secure_distance(&cfg)).map(|d| d.km).map_err(to_py)
}

/// Sweep CSV as a string.
#[pyfunction]
#[pyo3(signature = (config, axis, start, stop, steps, optimize=None, baseline=false))]
#[allow(clippy::too_many_arguments)]
fn sweep(
    py: Python<'_>,
    config: &str,
    axis: &str,
    start: f64,
    stop: f64,
    steps: usize,
    optimize: Option<&str>,
    baseline: bool,
) -> PyResult<String> {
    let cfg = load(config, None)?;
    let axis = Axis::parse(axis).map_err(to_py)?;
    let vary = optimize.map(Param::parse_list).transpose().map_err(to_py)?.unwrap_or_default();
    let rows = py
        .detach(|| driver::sweep(&cfg, axis, start, stop, steps, &vary, baseline))
        .map_err(to_py)?;
    let mut buf = Vec::new();
    driver::write_sweep_csv(&mut buf, axis, &rows).map_err(to_py)?;
    String::from_utf8(buf).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

/// Post-select a covariance `(a, b, c)`; give exactly one of `cutoff` or `kappa`.
#[pyfunction]
#[pyo3(signature = (a, b, c, gain, cutoff=None, kappa=None))]
fn postselect<'py>(
    py: Python<'py>,
    a: f64,
    b: f64,
    c: f64,
    gain: f64,
    cutoff: Option<f64>,
    kappa: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let filter = match (cutoff, kappa) {
        (Some(g), None) => FilterConfig::absolute(gain, g),
        (None, Some(k)) => FilterConfig::multiple(gain, k),
        _ => return Err(ConfigError::new_err("give exactly one of cutoff or kappa")),
    };
    let m = TwoModeCovariance::new(a, b, c);
    let ps = py
        .detach(|| postselection::postselect(&m, &filter, &QuadratureConfig::default()))
        .map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("p_s", ps.success_probability)?;
    d.set_item("covariance", (ps.covariance.a, ps.covariance.b, ps.covariance.c))?;
    d.set_item("cutoff", ps.filter.cutoff)?;
    d.set_item("regime", driver::regime_name(ps.regime))?;
    Ok(d)
}

/// Monte-Carlo acceptance fraction and moments for the configured state and filter.
#[pyfunction]
#[pyo3(signature = (config, samples, seed))]
fn simulate<'py>(py: Python<'py>, config: &str, samples: usize, seed: u64) -> PyResult<Bound<'py, PyDict>> {
    let cfg = load(config, None)?;
    let out = py
        .detach(|| {
            let m = channel_output_covariance(cfg.chi, &cfg.channel.model()?)?;
            mc_simulate(&m, &SimConfig::new(samples, seed, cfg.filter))
        })
        .map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("p_s", out.success_probability)?;
    d.set_item("p_s_se", out.success_probability_se)?;
    let m = &out.moments;
    d.set_item("covariance", (m.covariance.a, m.covariance.b, m.covariance.c))?;
    d.set_item("std_error", m.std_error.to_vec())?;
    d.set_item("accepted", out.accepted_count)?;
    Ok(d)
}

#[pymodule]
fn cvqkd(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("ConfigError", m.py().get_type::<ConfigError>())?;
    m.add("ConvergenceError", m.py().get_type::<ConvergenceError>())?;
    m.add("NotSecureError", m.py().get_type::<NotSecureError>())?;
    m.add_function(wrap_pyfunction!(key_rate, m)?)?;
    m.add_function(wrap_pyfunction!(optimize, m)?)?;
    m.add_function(wrap_pyfunction!(max_distance, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(postselect, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    Ok(())
}
