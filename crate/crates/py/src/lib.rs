use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use leotrace::metrics::{compare as compare_series, Comparison, TimeSeries};
use leotrace::replay::constant_trace as make_constant_trace;
use leotrace::scenario::{Scenario, Workload};
use leotrace::tracefile::{self, TraceFile};
use leotrace::workflow::{self, Measurements, Prepared, Thresholds};

create_exception!(pyleotrace, LeotraceError, PyException);

fn err(e: impl std::fmt::Display) -> PyErr {
    LeotraceError::new_err(e.to_string())
}

fn parse_workload(name: Option<&str>, default: Workload) -> PyResult<Workload> {
    match name {
        None => Ok(default),
        Some("speedtest") => Ok(Workload::Speedtest),
        Some("ping") => Ok(Workload::Ping),
        Some("both") => Ok(Workload::Both),
        Some(other) => Err(err(format!("unknown workload `{other}`"))),
    }
}

/// Simulation, traffic and trace parameters of one run.
#[pyclass(name = "Scenario", module = "pyleotrace", skip_from_py_object)]
#[derive(Clone)]
struct PyScenario {
    inner: Scenario,
}

#[pymethods]
impl PyScenario {
    /// Parses scenario JSON; missing keys take their defaults.
    #[new]
    #[pyo3(signature = (json = None))]
    fn new(json: Option<&str>) -> PyResult<Self> {
        let inner = match json {
            Some(text) => Scenario::from_json(text, None).map_err(err)?,
            None => Scenario::default(),
        };
        Ok(Self { inner })
    }

    #[staticmethod]
    fn preset(name: &str) -> PyResult<Self> {
        Scenario::preset(name)
            .map(|inner| Self { inner })
            .ok_or_else(|| err(format!("unknown preset `{name}`")))
    }

    #[staticmethod]
    fn presets() -> Vec<&'static str> {
        Scenario::PRESETS.to_vec()
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: Scenario::load(std::path::Path::new(path)).map_err(err)?,
        })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(err)
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    #[getter]
    fn duration_s(&self) -> f64 {
        self.inner.duration_s
    }

    #[setter]
    fn set_duration_s(&mut self, v: f64) {
        self.inner.duration_s = v;
    }

    #[getter]
    fn num_flows(&self) -> usize {
        self.inner.traffic.num_flows
    }

    #[setter]
    fn set_num_flows(&mut self, v: usize) {
        self.inner.traffic.num_flows = v;
    }

    #[getter]
    fn endpoints(&self) -> (u32, u32) {
        self.inner.endpoints
    }

    #[setter]
    fn set_endpoints(&mut self, v: (u32, u32)) {
        self.inner.endpoints = v;
    }

    #[getter]
    fn num_stations(&self) -> usize {
        self.inner.stations.len()
    }

    /// Sets the flow, simulation and loss seeds.
    fn set_seed(&mut self, seed: u64) {
        self.inner.seeds.flows = seed;
        self.inner.seeds.sim = seed;
        self.inner.seeds.loss = seed;
    }

    fn __repr__(&self) -> String {
        format!(
            "Scenario(name={:?}, duration_s={}, stations={}, endpoints={:?})",
            self.inner.name,
            self.inner.duration_s,
            self.inner.stations.len(),
            self.inner.endpoints
        )
    }
}

/// Fixed-interval path timeline for one direction.
#[pyclass(name = "TraceFile", module = "pyleotrace", skip_from_py_object)]
#[derive(Clone)]
struct PyTraceFile {
    inner: TraceFile,
}

#[pymethods]
impl PyTraceFile {
    #[staticmethod]
    fn from_csv(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: tracefile::parse(text).map_err(err)?,
        })
    }

    #[staticmethod]
    fn read(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: workflow::read_trace(std::path::Path::new(path)).map_err(err)?,
        })
    }

    fn to_csv(&self) -> PyResult<String> {
        let bytes = self.inner.to_bytes().map_err(err)?;
        String::from_utf8(bytes).map_err(err)
    }

    fn write(&self, path: &str) -> PyResult<()> {
        workflow::write_trace(std::path::Path::new(path), &self.inner).map_err(err)
    }

    #[getter]
    fn resolution_ms(&self) -> u64 {
        self.inner.meta.resolution_ms
    }

    #[getter]
    fn direction(&self) -> &'static str {
        self.inner.meta.direction.as_str()
    }

    /// `(t_ms, delay_us, rate_bps, queue_capacity_pkts, loss_ratio, route_id)` per record.
    fn records(&self) -> Vec<(u64, i64, i64, i64, f64, u64)> {
        self.inner
            .records
            .iter()
            .map(|r| (r.t_ms, r.delay_us, r.rate_bps, r.queue_capacity_pkts, r.loss_ratio, r.route_id))
            .collect()
    }

    fn __len__(&self) -> usize {
        self.inner.records.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "TraceFile(direction={}, resolution_ms={}, records={})",
            self.inner.meta.direction.as_str(),
            self.inner.meta.resolution_ms,
            self.inner.records.len()
        )
    }
}

fn series_dict<'py>(py: Python<'py>, s: &TimeSeries) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("t0_s", s.t0_s)?;
    d.set_item("bin_s", s.bin_s)?;
    d.set_item("values", s.values.clone())?;
    Ok(d)
}

fn comparison_dict<'py>(py: Python<'py>, c: &Comparison) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("mae", c.mae)?;
    d.set_item("r_squared", c.r_squared)?;
    d.set_item("pearson", c.pearson)?;
    d.set_item("lag_s", c.lag_s)?;
    d.set_item("lag_pearson", c.lag_pearson)?;
    d.set_item("reference_mean", c.reference_mean)?;
    Ok(d)
}

fn measurements_dict<'py>(py: Python<'py>, m: &Measurements) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("goodput", m.goodput.as_ref().map(|s| series_dict(py, s)).transpose()?)?;
    d.set_item("rtt", m.rtt.as_ref().map(|s| series_dict(py, s)).transpose()?)?;
    let pings: Vec<(u32, f64, Option<f64>)> = m.pings.iter().map(|p| (p.seq, p.send_s, p.rtt_s)).collect();
    d.set_item("pings", pings)?;
    d.set_item("goodput_events", m.goodput_events.clone())?;
    Ok(d)
}

/// Background-only run with trace packets; returns the forward and return traces.
#[pyfunction]
fn gen_traces(py: Python<'_>, scenario: &PyScenario) -> PyResult<(PyTraceFile, PyTraceFile)> {
    let sc = scenario.inner.clone();
    let (f, r) = py
        .detach(move || Prepared::new(&sc).and_then(|p| p.gen_traces()).map(|(f, r, _)| (f, r)))
        .map_err(err)?;
    Ok((PyTraceFile { inner: f }, PyTraceFile { inner: r }))
}

/// Full simulation with background traffic and the workload.
#[pyfunction]
#[pyo3(signature = (scenario, workload = None))]
fn simulate<'py>(py: Python<'py>, scenario: &PyScenario, workload: Option<&str>) -> PyResult<Bound<'py, PyDict>> {
    let sc = scenario.inner.clone();
    let w = parse_workload(workload, sc.workload)?;
    let m = py
        .detach(move || {
            let out = Prepared::new(&sc)?.simulate(Some(w))?;
            workflow::measure(&sc, &out.apps)
        })
        .map_err(err)?;
    measurements_dict(py, &m)
}

/// Virtual-time replay of the workload over a pair of traces.
#[pyfunction]
#[pyo3(signature = (scenario, forward, ret, workload = None, delay_offset_us = None))]
fn replay<'py>(
    py: Python<'py>,
    scenario: &PyScenario,
    forward: &PyTraceFile,
    ret: &PyTraceFile,
    workload: Option<&str>,
    delay_offset_us: Option<i64>,
) -> PyResult<Bound<'py, PyDict>> {
    let sc = scenario.inner.clone();
    let w = parse_workload(workload, sc.workload)?;
    let (cf, cr) = workflow::channel_configs(&sc, forward.inner.clone(), ret.inner.clone(), delay_offset_us, None);
    let m = py
        .detach(move || {
            let out = workflow::replay_virtual(&sc, cf, cr, w)?;
            workflow::measure(&sc, &out.apps)
        })
        .map_err(err)?;
    measurements_dict(py, &m)
}

/// Simulation against replay comparison with the default thresholds.
#[pyfunction]
fn validate<'py>(py: Python<'py>, scenario: &PyScenario) -> PyResult<Bound<'py, PyDict>> {
    let sc = scenario.inner.clone();
    let r = py.detach(move || workflow::validate(&sc, Thresholds::default())).map_err(err)?;
    let d = PyDict::new(py);
    let checks: Vec<(&'static str, f64, bool)> = r.checks();
    d.set_item("checks", checks)?;
    d.set_item("passed", r.passed())?;
    d.set_item("goodput", r.goodput.as_ref().map(|c| comparison_dict(py, &c.comparison)).transpose()?)?;
    d.set_item("rtt", r.rtt.as_ref().map(|c| comparison_dict(py, &c.comparison)).transpose()?)?;
    Ok(d)
}

/// MAE, R^2, Pearson and lag-corrected Pearson of `b` against `a`.
#[pyfunction]
#[pyo3(signature = (a, b, bin_s, max_lag_s = 5.0))]
fn compare<'py>(py: Python<'py>, a: Vec<f64>, b: Vec<f64>, bin_s: f64, max_lag_s: f64) -> PyResult<Bound<'py, PyDict>> {
    let a = TimeSeries::new(0.0, bin_s, a).map_err(err)?;
    let b = TimeSeries::new(0.0, bin_s, b).map_err(err)?;
    comparison_dict(py, &compare_series(&a, &b, max_lag_s).map_err(err)?)
}

/// A trace with the same record repeated over `duration_s`.
#[pyfunction]
#[pyo3(signature = (rate_bps, delay_us, capacity_pkts, loss_ratio = 0.0, resolution_ms = 10, duration_s = 60.0))]
fn constant_trace(
    rate_bps: i64,
    delay_us: i64,
    capacity_pkts: i64,
    loss_ratio: f64,
    resolution_ms: u64,
    duration_s: f64,
) -> PyResult<PyTraceFile> {
    let inner = make_constant_trace(rate_bps, delay_us, capacity_pkts, loss_ratio, resolution_ms, duration_s);
    inner.validate().map_err(err)?;
    Ok(PyTraceFile { inner })
}

#[pymodule]
fn pyleotrace(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("LeotraceError", m.py().get_type::<LeotraceError>())?;
    m.add_class::<PyScenario>()?;
    m.add_class::<PyTraceFile>()?;
    m.add_function(wrap_pyfunction!(gen_traces, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(replay, m)?)?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    m.add_function(wrap_pyfunction!(compare, m)?)?;
    m.add_function(wrap_pyfunction!(constant_trace, m)?)?;
    Ok(())
}
