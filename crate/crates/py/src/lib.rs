//! Python bindings: scenarios, ensemble sampling, full runs, flux profiles
//! and the invariant suite.

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use slitflight::analysis::{arrival_bins, build_histogram, uniform_edges, FluxProfile, Histogram2D};
use slitflight::checks::invariant_suite;
use slitflight::{RunOptions, ScenarioConfig, SimError, SlitTag};

fn to_py(e: SimError) -> PyErr {
    match e {
        SimError::Io(e) => PyOSError::new_err(e.to_string()),
        SimError::HistoryFormat(_) => PyOSError::new_err(e.to_string()),
        SimError::Validation(_)
        | SimError::GridTooSmall(_)
        | SimError::UnknownPreset(_)
        | SimError::Parse { .. }
        | SimError::BinMismatch => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// A validated scenario: packet, barrier, grid, solver and ensemble settings.
#[pyclass(name = "Scenario", from_py_object)]
#[derive(Clone)]
struct PyScenario {
    inner: ScenarioConfig,
}

#[pymethods]
impl PyScenario {
    #[staticmethod]
    fn preset(name: &str) -> PyResult<Self> {
        slitflight::preset(name).map(|inner| Self { inner }).map_err(to_py)
    }

    /// Parses the key=value format (`base=<preset>` supplies missing keys).
    #[staticmethod]
    fn from_kv(text: &str) -> PyResult<Self> {
        ScenarioConfig::from_kv_str(text).map(|inner| Self { inner }).map_err(to_py)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        slitflight::load_config(path).map(|inner| Self { inner }).map_err(to_py)
    }

    fn to_kv(&self) -> String {
        self.inner.to_kv_string()
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.ensemble.seed
    }

    #[setter]
    fn set_seed(&mut self, seed: u64) {
        self.inner.ensemble.seed = seed;
    }

    #[getter]
    fn n_particles(&self) -> usize {
        self.inner.ensemble.n_particles
    }

    #[setter]
    fn set_n_particles(&mut self, n: usize) -> PyResult<()> {
        if n == 0 {
            return Err(PyValueError::new_err("n_particles must be >= 1"));
        }
        self.inner.ensemble.n_particles = n;
        Ok(())
    }

    #[getter]
    fn detection_d(&self) -> f64 {
        self.inner.detection_d
    }

    #[getter]
    fn t_max(&self) -> f64 {
        self.inner.solver.t_max
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!(
            "Scenario(name={:?}, n_particles={}, seed={})",
            self.inner.name, self.inner.ensemble.n_particles, self.inner.ensemble.seed
        )
    }
}

/// Binned data: `values[ix][it]` over `x_edges` × `t_edges`.
#[pyclass(name = "Binned", get_all)]
struct PyBinned {
    x_edges: Vec<f64>,
    t_edges: Vec<f64>,
    values: Vec<Vec<f64>>,
}

impl PyBinned {
    fn from_histogram(h: &Histogram2D) -> Self {
        Self {
            x_edges: h.x_edges.clone(),
            t_edges: h.t_edges.clone(),
            values: h.counts.chunks(h.n_t()).map(|r| r.iter().map(|&c| c as f64).collect()).collect(),
        }
    }

    fn from_flux(f: &FluxProfile) -> Self {
        Self {
            x_edges: f.x_edges.clone(),
            t_edges: f.t_edges.clone(),
            values: f.flux_density.chunks(f.n_t()).map(<[f64]>::to_vec).collect(),
        }
    }
}

#[pymethods]
impl PyBinned {
    fn total(&self) -> f64 {
        self.values.iter().flatten().sum()
    }

    fn marginal_x(&self) -> Vec<f64> {
        self.values.iter().map(|r| r.iter().sum()).collect()
    }
}

/// Outcome of `simulate`.
#[pyclass(name = "RunResult", get_all)]
struct PyRunResult {
    /// (trajectory_id, x0, z0, status, slit, x_hit or None, t_f or None)
    records: Vec<(usize, f64, f64, String, String, Option<f64>, Option<f64>)>,
    n: usize,
    detected: usize,
    backscattered: usize,
    node_abort: usize,
    left: usize,
    right: usize,
    histogram: Py<PyBinned>,
    flux: Py<PyBinned>,
    norm: f64,
    absorbed: f64,
}

#[pymethods]
impl PyRunResult {
    fn transmission(&self) -> f64 {
        self.detected as f64 / self.n as f64
    }
}

fn check_bins(bins_x: usize, bins_t: usize) -> PyResult<()> {
    if bins_x == 0 || bins_t == 0 {
        return Err(PyValueError::new_err("bin counts must be >= 1"));
    }
    Ok(())
}

/// Names of the built-in presets.
#[pyfunction]
fn presets() -> Vec<&'static str> {
    slitflight::PRESETS.to_vec()
}

/// Initial positions (x, z) drawn from |ψ(·, 0)|² with the given seed.
#[pyfunction]
fn sample_initial(scenario: &PyScenario, n: usize, seed: u64) -> Vec<(f64, f64)> {
    slitflight::sample_initial(&scenario.inner.packet, n, seed)
}

/// Solves the scenario, integrates its ensemble and bins arrivals and flux.
#[pyfunction]
#[pyo3(signature = (scenario, bins_x = 64, bins_t = 64))]
fn simulate(py: Python<'_>, scenario: &PyScenario, bins_x: usize, bins_t: usize) -> PyResult<PyRunResult> {
    check_bins(bins_x, bins_t)?;
    let c = scenario.inner.clone();
    let opts = RunOptions {
        trajectories: true,
        flux: true,
        ..Default::default()
    };
    let (out, hist, flux) = py
        .detach(|| -> Result<_, SimError> {
            let out = slitflight::run(&c, &opts)?;
            let events = out.outcome.as_ref().expect("trajectories requested").events();
            let (xe, te) = arrival_bins(&events, &c.region(), c.solver.t_max, bins_x, bins_t);
            let hist = build_histogram(&events, &xe, &te)?;
            let flux = out.flux.as_ref().expect("flux requested").profile(&xe, &te)?;
            Ok((out, hist, flux))
        })
        .map_err(to_py)?;
    let outcome = out.outcome.expect("trajectories requested");
    let s = outcome.summary;
    let records = outcome
        .records
        .iter()
        .map(|r| {
            (
                r.trajectory_id,
                r.x0,
                r.z0,
                r.status.as_str().to_string(),
                r.slit.as_str().to_string(),
                r.event.map(|e| e.x_hit),
                r.event.map(|e| e.t_f),
            )
        })
        .collect();
    let count = |tag| outcome.records.iter().filter(|r| r.event.is_some() && r.slit == tag).count();
    Ok(PyRunResult {
        records,
        n: s.n,
        detected: s.detected,
        backscattered: s.backscattered,
        node_abort: s.node_abort,
        left: count(SlitTag::Left),
        right: count(SlitTag::Right),
        histogram: Py::new(py, PyBinned::from_histogram(&hist))?,
        flux: Py::new(py, PyBinned::from_flux(&flux))?,
        norm: out.ledger.norm,
        absorbed: out.ledger.absorbed_front + out.ledger.absorbed_rear,
    })
}

/// Time-integrated flux through the screen, binned over the followed x-range.
#[pyfunction]
#[pyo3(signature = (scenario, bins_x = 64, bins_t = 64))]
fn flux(py: Python<'_>, scenario: &PyScenario, bins_x: usize, bins_t: usize) -> PyResult<PyBinned> {
    check_bins(bins_x, bins_t)?;
    let c = scenario.inner.clone();
    let profile = py
        .detach(|| -> Result<_, SimError> {
            let out = slitflight::run(
                &c,
                &RunOptions {
                    flux: true,
                    ..Default::default()
                },
            )?;
            let r = c.region();
            out.flux
                .expect("flux requested")
                .profile(&uniform_edges(r.x_lo, r.x_hi, bins_x), &uniform_edges(0.0, c.solver.t_max, bins_t))
        })
        .map_err(to_py)?;
    Ok(PyBinned::from_flux(&profile))
}

/// Runs the invariant suite; returns (name, value, threshold, passed) rows.
#[pyfunction]
#[pyo3(signature = (scenario, bins_x = 64, bins_t = 64))]
fn validate(py: Python<'_>, scenario: &PyScenario, bins_x: usize, bins_t: usize) -> PyResult<Vec<(String, f64, String, bool)>> {
    check_bins(bins_x, bins_t)?;
    let c = scenario.inner.clone();
    let rows = py.detach(|| invariant_suite(&c, bins_x, bins_t)).map_err(to_py)?;
    Ok(rows.into_iter().map(|r| (r.name, r.value, r.threshold, r.pass)).collect())
}

/// Barrier potential V(x, z, t) of a scenario.
#[pyfunction]
fn potential(scenario: &PyScenario, x: f64, z: f64, t: f64) -> f64 {
    slitflight::potential(x, z, t, &scenario.inner.barrier)
}

#[pymodule]
#[pyo3(name = "slitflight")]
fn slitflight_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScenario>()?;
    m.add_class::<PyBinned>()?;
    m.add_class::<PyRunResult>()?;
    m.add_function(wrap_pyfunction!(presets, m)?)?;
    m.add_function(wrap_pyfunction!(sample_initial, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(flux, m)?)?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    m.add_function(wrap_pyfunction!(potential, m)?)?;
    Ok(())
}
