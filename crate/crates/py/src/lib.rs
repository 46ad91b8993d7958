//! Python bindings for the polykinetic solver: scalar entropy/cut-off
//! functions, model constants, and a configuration-driven simulation
//! handle returning the audited trace summary.

use polykinetic::config::{emit_config, fingerprint, parse_config};
use polykinetic::coupled::RunTrace;
use polykinetic::diagnostics::decay_fit;
use polykinetic::{entropy, maxwellian, params, scenarios, trace_io, xspace};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn value_err(e: polykinetic::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: polykinetic::Error) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

/// `F(s) = s (log s - 1) + 1`.
#[pyfunction]
fn entropy_f(s: f64) -> PyResult<f64> {
    entropy::entropy_f(s).map_err(value_err)
}

/// Cut-off entropy `F^L` and derivatives (`order` 0, 1 or 2).
#[pyfunction]
fn entropy_family(s: f64, cutoff: f64, order: u8) -> PyResult<f64> {
    entropy::entropy_family(s, cutoff, order).map_err(value_err)
}

/// Microscopic cut-off `beta^L(s) = min(s, L)`.
#[pyfunction]
fn beta(s: f64, cutoff: f64) -> f64 {
    entropy::beta(s, cutoff)
}

/// `beta^L_delta(s) = max(min(s, L), delta)`.
#[pyfunction]
fn beta_delta(s: f64, cutoff: f64, delta: f64) -> f64 {
    entropy::beta_delta(s, cutoff, delta)
}

/// Hookean-type spring potential (`order` 0 for the value, 1 for the
/// derivative).
#[pyfunction]
fn potential(s: f64, theta: f64, s_inf: f64, order: u8) -> PyResult<f64> {
    let spec = params::PotentialSpec { theta, s_inf };
    spec.validate().map_err(value_err)?;
    maxwellian::potential(s, &spec, order).map_err(value_err)
}

/// Smallest eigenvalue of the linear-chain Rouse matrix.
#[pyfunction]
fn rouse_a0(springs: usize) -> PyResult<f64> {
    Ok(params::rouse_matrix(springs).map_err(value_err)?.a0)
}

/// Time step and step count from the dt-L link `dt <= C0 / (L log L)`.
#[pyfunction]
fn cutoff_schedule(cutoff: f64, c0: f64, t_final: f64) -> PyResult<(f64, usize)> {
    let s = params::cutoff_schedule(cutoff, c0, t_final).map_err(value_err)?;
    Ok((s.dt, s.steps))
}

/// Bakry-Emery (log-Sobolev) modulus of the Maxwellian.
#[pyfunction]
fn bakry_emery_modulus(theta: f64, s_inf: f64) -> PyResult<f64> {
    let spec = params::PotentialSpec { theta, s_inf };
    spec.validate().map_err(value_err)?;
    maxwellian::bakry_emery_modulus(&spec).map_err(runtime_err)
}

/// Mean-zero Poincare constant of the torus.
#[pyfunction]
fn poincare_constant_torus(side: f64) -> PyResult<f64> {
    xspace::poincare_constant(xspace::Domain::Torus { side }).map_err(value_err)
}

/// Decay-rate lower bound `min(nu / C_P^2, kappa a0 / (2 lambda))` on the
/// unit torus.
#[pyfunction]
fn decay_rate_bound(nu: f64, lambda: f64, kappa: f64, a0: f64) -> PyResult<f64> {
    polykinetic::diagnostics::decay_rate_bound(
        nu,
        lambda,
        kappa,
        a0,
        xspace::Domain::Torus { side: 1.0 },
    )
    .map_err(value_err)
}

/// Canonical config text of a named scenario preset.
#[pyfunction]
fn scenario_config(name: &str) -> PyResult<String> {
    scenarios::preset(name)
        .map(|cfg| emit_config(&cfg))
        .ok_or_else(|| {
            PyValueError::new_err(format!(
                "unknown scenario `{name}`; available: {}",
                scenarios::preset_names().join(", ")
            ))
        })
}

/// Runs the invariant selftest; returns the report lines.
#[pyfunction]
fn selftest() -> PyResult<Vec<String>> {
    scenarios::run_selftest().map_err(runtime_err)
}

fn summary_dict<'py>(py: Python<'py>, trace: &RunTrace, k: f64) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("steps", trace.meta.steps)?;
    d.set_item("dt", trace.meta.dt)?;
    d.set_item("cutoff", trace.meta.cutoff)?;
    d.set_item("gamma0", trace.meta.gamma0)?;
    d.set_item("kappa", trace.meta.kappa)?;
    d.set_item("a0", trace.meta.a0)?;
    d.set_item("poincare", trace.meta.poincare)?;
    d.set_item("fingerprint", trace.meta.config_fingerprint.clone())?;
    if let Some(last) = trace.records.last() {
        d.set_item("final_time", last.t)?;
        d.set_item("final_free_energy", last.free_energy)?;
        d.set_item("final_kinetic_energy", last.kinetic_energy)?;
        d.set_item("final_relative_entropy", last.relative_entropy)?;
        d.set_item("final_mass_min", last.mass_min)?;
        d.set_item("final_mass_max", last.mass_max)?;
    }
    let min_slack = trace
        .records
        .iter()
        .map(|r| r.energy_budget_slack)
        .fold(f64::INFINITY, f64::min);
    let min_ck = trace.records.iter().map(|r| r.ck_gap).fold(f64::INFINITY, f64::min);
    let min_ls = trace.records.iter().map(|r| r.ls_gap).fold(f64::INFINITY, f64::min);
    d.set_item("min_budget_slack", min_slack)?;
    d.set_item("min_ck_gap", min_ck)?;
    d.set_item("min_ls_gap", min_ls)?;
    if let Ok(rate) = decay_fit(k, &trace.records) {
        d.set_item("fitted_decay_rate", rate)?;
    }
    Ok(d)
}

/// A parsed, validated run configuration.
#[pyclass]
struct Simulation {
    cfg: polykinetic::config::RunConfig,
}

#[pymethods]
impl Simulation {
    /// Parse the flat-text configuration format.
    #[new]
    fn new(config_text: &str) -> PyResult<Self> {
        Ok(Simulation {
            cfg: parse_config(config_text).map_err(value_err)?,
        })
    }

    /// Canonical emission of the configuration.
    fn emit(&self) -> String {
        emit_config(&self.cfg)
    }

    fn fingerprint(&self) -> String {
        fingerprint(&self.cfg)
    }

    /// Integrate and return the audited summary.
    fn run<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let trace = self.cfg.run().map_err(runtime_err)?;
        summary_dict(py, &trace, self.cfg.physical.k)
    }

    /// Integrate and additionally write the per-step trace CSV.
    fn run_to_csv<'py>(&self, py: Python<'py>, path: &str) -> PyResult<Bound<'py, PyDict>> {
        let trace = self.cfg.run().map_err(runtime_err)?;
        trace_io::write_trace_csv(&trace, std::path::Path::new(path)).map_err(runtime_err)?;
        summary_dict(py, &trace, self.cfg.physical.k)
    }
}

#[pymodule]
fn polykinetic_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(entropy_f, m)?)?;
    m.add_function(wrap_pyfunction!(entropy_family, m)?)?;
    m.add_function(wrap_pyfunction!(beta, m)?)?;
    m.add_function(wrap_pyfunction!(beta_delta, m)?)?;
    m.add_function(wrap_pyfunction!(potential, m)?)?;
    m.add_function(wrap_pyfunction!(rouse_a0, m)?)?;
    m.add_function(wrap_pyfunction!(cutoff_schedule, m)?)?;
    m.add_function(wrap_pyfunction!(bakry_emery_modulus, m)?)?;
    m.add_function(wrap_pyfunction!(poincare_constant_torus, m)?)?;
    m.add_function(wrap_pyfunction!(decay_rate_bound, m)?)?;
    m.add_function(wrap_pyfunction!(scenario_config, m)?)?;
    m.add_function(wrap_pyfunction!(selftest, m)?)?;
    m.add_class::<Simulation>()?;
    Ok(())
}
