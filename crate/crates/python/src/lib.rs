//! Python bindings: simulation, identification, metrics and the campaign
//! driver, importable as `propvib`.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use pyo3::exceptions::{PyFileNotFoundError, PyLookupError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use propvib::campaign::CampaignConfig;
use propvib::error::Error;
use propvib::pipeline::{self, PipelineConfig};
use propvib::record::load_record;

fn to_py(e: Error) -> PyErr {
    match &e {
        Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => {
            PyFileNotFoundError::new_err(e.to_string())
        }
        Error::NoModes(_) => PyLookupError::new_err(e.to_string()),
        Error::Io { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn pipeline_config(toml: Option<&str>) -> PyResult<PipelineConfig> {
    toml.map_or_else(|| Ok(PipelineConfig::default()), PipelineConfig::from_toml).map_err(to_py)
}

fn campaign_config(toml: Option<&str>, seed: Option<u64>) -> PyResult<CampaignConfig> {
    let mut c = toml.map_or_else(|| Ok(CampaignConfig::standard()), CampaignConfig::from_toml).map_err(to_py)?;
    if let Some(s) = seed {
        c.seed = s;
    }
    Ok(c)
}

/// Continuous-time pole `-zeta w + i w sqrt(1 - zeta^2)` of a mode.
#[pyfunction]
fn pole_from_modal(frequency_hz: f64, damping_ratio: f64) -> Complex64 {
    propvib::loewner::pole_from_modal(frequency_hz, damping_ratio)
}

/// `(frequency_hz, damping_ratio)` of a continuous-time pole.
#[pyfunction]
fn pole_to_modal(pole: Complex64) -> (f64, f64) {
    propvib::loewner::pole_to_modal(pole)
}

#[pyfunction]
fn mac(a: Vec<Complex64>, b: Vec<Complex64>) -> PyResult<f64> {
    propvib::metrics::mac(&a, &b).map_err(to_py)
}

/// Simulates one case of a campaign (default: the built-in schedule).
/// Returns `{"sample_rate", "channels", "data"}`, data as one list per channel.
#[pyfunction]
#[pyo3(signature = (label, campaign_toml=None, seed=None))]
fn simulate<'py>(
    py: Python<'py>,
    label: &str,
    campaign_toml: Option<&str>,
    seed: Option<u64>,
) -> PyResult<Bound<'py, PyDict>> {
    let campaign = campaign_config(campaign_toml, seed)?;
    let rec = py.detach(|| pipeline::simulate_case(&campaign, label)).map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("sample_rate", rec.sample_rate())?;
    out.set_item("channels", rec.sensors().iter().map(|s| s.id.clone()).collect::<Vec<_>>())?;
    out.set_item("data", (0..rec.channel_count()).map(|c| rec.channel(c)).collect::<Vec<_>>())?;
    Ok(out)
}

/// Identifies modes from a record file; one dict per mode.
#[pyfunction]
#[pyo3(signature = (record_path, config_toml=None))]
fn identify<'py>(
    py: Python<'py>,
    record_path: PathBuf,
    config_toml: Option<&str>,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let cfg = pipeline_config(config_toml)?;
    let modes =
        py.detach(|| load_record(&record_path).and_then(|r| pipeline::identify(&r, &cfg))).map_err(to_py)?.modes;
    modes
        .modes()
        .iter()
        .map(|m| {
            let d = PyDict::new(py);
            d.set_item("frequency_hz", m.frequency_hz)?;
            d.set_item("damping_ratio", m.damping_ratio)?;
            d.set_item("shape", m.shape.clone())?;
            d.set_item("cluster_size", m.cluster_size)?;
            Ok(d)
        })
        .collect()
}

/// Writes the comparison report of two mode-set files; returns its path.
#[pyfunction]
fn compare(py: Python<'_>, reference: PathBuf, case: PathBuf, out_dir: PathBuf) -> PyResult<PathBuf> {
    py.detach(|| pipeline::cmd_compare(&reference, &case, &out_dir)).map_err(to_py)
}

/// Runs a full campaign into `out_dir`; returns the written paths by kind.
#[pyfunction]
#[pyo3(signature = (out_dir, config_toml=None, campaign_toml=None, seed=None))]
fn run_campaign<'py>(
    py: Python<'py>,
    out_dir: PathBuf,
    config_toml: Option<&str>,
    campaign_toml: Option<&str>,
    seed: Option<u64>,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = pipeline_config(config_toml)?;
    let campaign = campaign_config(campaign_toml, seed)?;
    let o = py.detach(|| pipeline::cmd_campaign(&campaign, &cfg, Path::new(&out_dir))).map_err(to_py)?;
    let out = PyDict::new(py);
    for (k, v) in [
        ("records", o.records),
        ("psd", o.psd),
        ("anpsd", o.anpsd),
        ("identify", o.identify),
        ("modesets", o.modesets),
        ("reports", o.reports),
    ] {
        out.set_item(k, v)?;
    }
    Ok(out)
}

#[pymodule]
#[pyo3(name = "propvib")]
fn propvib_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(pole_from_modal, m)?)?;
    m.add_function(wrap_pyfunction!(pole_to_modal, m)?)?;
    m.add_function(wrap_pyfunction!(mac, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(identify, m)?)?;
    m.add_function(wrap_pyfunction!(compare, m)?)?;
    m.add_function(wrap_pyfunction!(run_campaign, m)?)?;
    Ok(())
}
