//! End-to-end stages: forwarding state, full simulation, trace generation,
//! virtual-time replay, and the comparison report.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::metrics::{compare, goodput_series, ping_rtt_series, Comparison, MetricsError, TimeSeries};
use crate::metrics::{DEFAULT_GOODPUT_BIN_S, DEFAULT_MAX_LAG_S};
use crate::netsim::{run_on_network, ConstellationNet, NetsimError, SimConfig, SimOutput};
use crate::replay::{open_pair, run_replay, ChannelConfig, ReplayError, ReplayOutput};
use crate::scenario::{Scenario, ScenarioError, Workload};
use crate::topology::{forwarding_timeline, write_forwarding_diff, ForwardingState, TopologyError};
use crate::tracefile::{self, Direction, TraceFile, TraceFileError, TraceMeta};
use crate::tracer::aggregate_stream;
use crate::traffic::{
    generate_background_flows, write_flows, AppInstance, CbrApp, FlowSpec, PingApp, PingResult, SpeedtestApp,
    TrafficError,
};

#[derive(Debug, Error)]
pub enum WorkflowError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl WorkflowError {
    pub fn exit_code(&self) -> i32 {
        match self {
            WorkflowError::Config(_) => 2,
            WorkflowError::Validation(_) => 3,
            WorkflowError::Runtime(_) => 4,
        }
    }
}

impl From<ScenarioError> for WorkflowError {
    fn from(e: ScenarioError) -> Self {
        WorkflowError::Config(e.to_string())
    }
}

impl From<NetsimError> for WorkflowError {
    fn from(e: NetsimError) -> Self {
        match e {
            NetsimError::Io(_) => WorkflowError::Runtime(e.to_string()),
            _ => WorkflowError::Config(e.to_string()),
        }
    }
}

impl From<TopologyError> for WorkflowError {
    fn from(e: TopologyError) -> Self {
        WorkflowError::Config(e.to_string())
    }
}

impl From<TrafficError> for WorkflowError {
    fn from(e: TrafficError) -> Self {
        WorkflowError::Config(e.to_string())
    }
}

impl From<ReplayError> for WorkflowError {
    fn from(e: ReplayError) -> Self {
        match e {
            ReplayError::Config(_) | ReplayError::Trace(_) => WorkflowError::Config(e.to_string()),
            _ => WorkflowError::Runtime(e.to_string()),
        }
    }
}

impl From<TraceFileError> for WorkflowError {
    fn from(e: TraceFileError) -> Self {
        WorkflowError::Config(e.to_string())
    }
}

impl From<MetricsError> for WorkflowError {
    fn from(e: MetricsError) -> Self {
        WorkflowError::Runtime(e.to_string())
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> WorkflowError {
    WorkflowError::Runtime(format!("{}: {e}", path.display()))
}

/// A validated scenario with its forwarding timeline and background flows,
/// shared by every run of that scenario.
pub struct Prepared {
    pub scenario: Scenario,
    pub config: SimConfig,
    pub net: ConstellationNet,
    pub flows: Vec<FlowSpec>,
}

impl Prepared {
    pub fn new(scenario: &Scenario) -> Result<Self, WorkflowError> {
        scenario.validate()?;
        let config = scenario.sim_config();
        let states = gen_state(scenario)?;
        let net = ConstellationNet::from_states(&config, states)?;
        let flows = background_flows(scenario)?;
        Ok(Self {
            scenario: scenario.clone(),
            config,
            net,
            flows,
        })
    }

    fn run(&self, mut apps: Vec<AppInstance>, traced: bool) -> Result<SimOutput, WorkflowError> {
        let mut all: Vec<AppInstance> = self.flows.iter().cloned().map(|f| CbrApp::new(f).into()).collect();
        all.append(&mut apps);
        let tracer = if traced {
            Some(self.scenario.tracer_config()?)
        } else {
            None
        };
        Ok(run_on_network(
            &self.net,
            self.config.gates(),
            self.config.duration_s,
            self.config.drain_s,
            all,
            tracer.as_ref(),
        )?)
    }

    /// Full simulation with background traffic plus the selected workload.
    pub fn simulate(&self, workload: Option<Workload>) -> Result<SimOutput, WorkflowError> {
        let apps = match workload {
            Some(w) => workload_apps(&self.scenario, w)?,
            None => Vec::new(),
        };
        let mut out = self.run(apps, false)?;
        out.apps.drain(..self.flows.len());
        Ok(out)
    }

    /// Background-only run with trace packets; returns forward and return files.
    pub fn gen_traces(&self) -> Result<(TraceFile, TraceFile, SimOutput), WorkflowError> {
        let out = self.run(Vec::new(), true)?;
        let samples = out.trace.clone().expect("tracer was configured");
        let sc = &self.scenario;
        let res_ms = (sc.trace.interval_s * sc.trace.group_n as f64 * 1000.0).round() as u64;
        let build = |dir, s: &[crate::tracer::TraceSample]| -> Result<TraceFile, WorkflowError> {
            let records =
                aggregate_stream(s, sc.trace.group_n).map_err(|e| WorkflowError::Runtime(e.to_string()))?;
            let tf = TraceFile {
                meta: TraceMeta::new(sc.name.clone(), dir, res_ms, sc.seeds.sim),
                records,
            };
            tf.validate()?;
            Ok(tf)
        };
        Ok((
            build(Direction::Forward, &samples.forward)?,
            build(Direction::Return, &samples.ret)?,
            out,
        ))
    }
}

pub fn gen_state(sc: &Scenario) -> Result<Vec<ForwardingState>, WorkflowError> {
    sc.validate()?;
    Ok(forwarding_timeline(&sc.constellation, &sc.stations, sc.fs_interval_s, sc.duration_s)?)
}

pub fn background_flows(sc: &Scenario) -> Result<Vec<FlowSpec>, WorkflowError> {
    if sc.traffic.num_flows == 0 {
        return Ok(Vec::new());
    }
    let params = sc.traffic.flow_params(sc.duration_s);
    Ok(generate_background_flows(&params, sc.stations.len(), sc.seeds.flows)?)
}

/// Measurement apps between the endpoint pair for the whole run.
pub fn workload_apps(sc: &Scenario, w: Workload) -> Result<Vec<AppInstance>, WorkflowError> {
    let (a, b) = sc.endpoint_indices()?;
    let mut apps = Vec::new();
    if w.speedtest() {
        apps.push(SpeedtestApp::new(a, b, 0.0, sc.duration_s).into());
    }
    if w.ping() {
        apps.push(PingApp::new(a, b, 0.0, sc.duration_s, sc.ping.interval_s, sc.ping.payload_bytes).into());
    }
    Ok(apps)
}

pub fn channel_configs(
    sc: &Scenario,
    fwd: TraceFile,
    ret: TraceFile,
    delay_offset_us: Option<i64>,
    loss_seed: Option<u64>,
) -> (ChannelConfig, ChannelConfig) {
    let seed = loss_seed.unwrap_or(sc.seeds.loss);
    let make = |trace, seed| ChannelConfig {
        trace,
        start_mode: sc.replay.start_mode,
        delay_offset_us: delay_offset_us.unwrap_or(sc.trace.delay_offset_us),
        loss_seed: seed,
        end_policy: sc.replay.end_policy,
    };
    (make(fwd, seed), make(ret, seed.wrapping_add(1)))
}

/// Virtual-time replay of the workload over the two trace files.
pub fn replay_virtual(
    sc: &Scenario,
    fwd: ChannelConfig,
    ret: ChannelConfig,
    workload: Workload,
) -> Result<ReplayOutput, WorkflowError> {
    let pair = open_pair(fwd, ret, 0.0)?;
    Ok(run_replay(pair, workload_apps(sc, workload)?, sc.duration_s, sc.drain_s)?)
}

/// Series extracted from measurement apps.
#[derive(Debug, Clone, Default)]
pub struct Measurements {
    pub goodput: Option<TimeSeries>,
    pub rtt: Option<TimeSeries>,
    pub pings: Vec<PingResult>,
    pub goodput_events: Vec<(f64, u64)>,
}

pub fn measure(sc: &Scenario, apps: &[AppInstance]) -> Result<Measurements, WorkflowError> {
    let mut m = Measurements::default();
    for app in apps {
        if let Some(st) = app.as_speedtest() {
            m.goodput_events = st.goodput_log().to_vec();
            m.goodput = Some(goodput_series(st.goodput_log(), 0.0, sc.duration_s, DEFAULT_GOODPUT_BIN_S)?);
        }
        if let Some(p) = app.as_ping() {
            m.pings = p.results();
            m.rtt = Some(ping_rtt_series(&m.pings, 0.0, sc.duration_s, sc.ping.interval_s)?);
        }
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Thresholds {
    pub rtt_lag_pearson: f64,
    pub goodput_lag_pearson: f64,
    pub max_abs_lag_s: f64,
    pub goodput_mae_fraction: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            rtt_lag_pearson: 0.95,
            goodput_lag_pearson: 0.85,
            max_abs_lag_s: 0.5,
            goodput_mae_fraction: 0.15,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SeriesComparison {
    pub comparison: Comparison,
    pub sim: TimeSeries,
    pub replay: TimeSeries,
}

#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub scenario: String,
    pub goodput: Option<SeriesComparison>,
    pub rtt: Option<SeriesComparison>,
    pub thresholds: Thresholds,
    pub sim: Measurements,
    pub replay: Measurements,
    pub traces: (TraceFile, TraceFile),
}

impl ValidationReport {
    /// `(check name, observed value, pass)` per threshold.
    pub fn checks(&self) -> Vec<(&'static str, f64, bool)> {
        let t = &self.thresholds;
        let mut out = Vec::new();
        if let Some(g) = &self.goodput {
            let c = &g.comparison;
            out.push(("goodput_lag_pearson", c.lag_pearson, c.lag_pearson >= t.goodput_lag_pearson));
            out.push(("goodput_abs_lag_s", c.lag_s.abs(), c.lag_s.abs() <= t.max_abs_lag_s));
            let frac = c.mae / c.reference_mean;
            out.push(("goodput_mae_fraction", frac, frac <= t.goodput_mae_fraction));
        }
        if let Some(r) = &self.rtt {
            let c = &r.comparison;
            out.push(("rtt_lag_pearson", c.lag_pearson, c.lag_pearson >= t.rtt_lag_pearson));
            out.push(("rtt_abs_lag_s", c.lag_s.abs(), c.lag_s.abs() <= t.max_abs_lag_s));
        }
        out
    }

    pub fn passed(&self) -> bool {
        self.checks().iter().all(|c| c.2)
    }
}

fn merge(mut a: Measurements, b: Measurements) -> Measurements {
    if b.goodput.is_some() {
        a.goodput = b.goodput;
        a.goodput_events = b.goodput_events;
    }
    if b.rtt.is_some() {
        a.rtt = b.rtt;
        a.pings = b.pings;
    }
    a
}

/// Runs both workflows on `sc` and compares their series. With `Workload::Both`
/// the speedtest and the ping run separately so neither perturbs the other.
pub fn validate(sc: &Scenario, thresholds: Thresholds) -> Result<ValidationReport, WorkflowError> {
    let prep = Prepared::new(sc)?;
    let (fwd, ret, _) = prep.gen_traces()?;
    let kinds: Vec<Workload> = match sc.workload {
        Workload::Both => vec![Workload::Speedtest, Workload::Ping],
        w => vec![w],
    };
    let mut sim = Measurements::default();
    let mut rep = Measurements::default();
    for w in kinds {
        let s = prep.simulate(Some(w))?;
        sim = merge(sim, measure(sc, &s.apps)?);
        let (cf, cr) = channel_configs(sc, fwd.clone(), ret.clone(), None, None);
        let r = replay_virtual(sc, cf, cr, w)?;
        rep = merge(rep, measure(sc, &r.apps)?);
    }
    let cmp = |a: &Option<TimeSeries>, b: &Option<TimeSeries>| -> Result<Option<SeriesComparison>, WorkflowError> {
        match (a, b) {
            (Some(a), Some(b)) => Ok(Some(SeriesComparison {
                comparison: compare(a, b, DEFAULT_MAX_LAG_S)?,
                sim: a.clone(),
                replay: b.clone(),
            })),
            _ => Ok(None),
        }
    };
    Ok(ValidationReport {
        scenario: sc.name.clone(),
        goodput: cmp(&sim.goodput, &rep.goodput)?,
        rtt: cmp(&sim.rtt, &rep.rtt)?,
        thresholds,
        sim,
        replay: rep,
        traces: (fwd, ret),
    })
}

fn create(path: &Path) -> Result<BufWriter<File>, WorkflowError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| io_err(path, e))?))
}

fn write_text(path: &Path, text: &str) -> Result<(), WorkflowError> {
    let mut f = create(path)?;
    f.write_all(text.as_bytes()).map_err(|e| io_err(path, e))?;
    f.flush().map_err(|e| io_err(path, e))
}

pub fn write_trace(path: &Path, tf: &TraceFile) -> Result<(), WorkflowError> {
    let f = create(path)?;
    tracefile::write(tf, f)?;
    Ok(())
}

pub fn read_trace(path: &Path) -> Result<TraceFile, WorkflowError> {
    let f = File::open(path).map_err(|e| WorkflowError::Config(format!("{}: {e}", path.display())))?;
    Ok(tracefile::read(std::io::BufReader::new(f))?)
}

pub fn goodput_csv(events: &[(f64, u64)]) -> String {
    let mut s = String::from("t_s,payload_bytes\n");
    for (t, b) in events {
        s.push_str(&format!("{t:.6},{b}\n"));
    }
    s
}

pub fn ping_csv(pings: &[PingResult]) -> String {
    let mut s = String::from("seq,send_s,rtt_ms\n");
    for p in pings {
        let rtt = p.rtt_s.map(|r| format!("{:.6}", r * 1000.0)).unwrap_or_default();
        s.push_str(&format!("{},{:.6},{rtt}\n", p.seq, p.send_s));
    }
    s
}

pub fn series_csv(c: &SeriesComparison) -> String {
    let fmt = |v: f64| if v.is_finite() { format!("{v}") } else { String::new() };
    let mut s = String::from("time,sim_value,replay_value\n");
    for i in 0..c.sim.len() {
        s.push_str(&format!("{:.6},{},{}\n", c.sim.time(i), fmt(c.sim.values[i]), fmt(c.replay.values[i])));
    }
    s
}

pub fn report_csv(r: &ValidationReport) -> String {
    let mut s = String::from("metric,scenario,value\n");
    let mut row = |m: String, v: f64| s.push_str(&format!("{m},{},{v}\n", r.scenario));
    for (name, c) in [("goodput", &r.goodput), ("rtt", &r.rtt)] {
        if let Some(c) = c {
            let k = &c.comparison;
            row(format!("{name}_mae"), k.mae);
            row(format!("{name}_r_squared"), k.r_squared);
            row(format!("{name}_pearson"), k.pearson);
            row(format!("{name}_lag_s"), k.lag_s);
            row(format!("{name}_lag_pearson"), k.lag_pearson);
            row(format!("{name}_sim_mean"), k.reference_mean);
        }
    }
    for (name, v, ok) in r.checks() {
        row(format!("check_{name}"), v);
        row(format!("pass_{name}"), if ok { 1.0 } else { 0.0 });
    }
    s
}

fn measurement_files(out: &Path, prefix: &str, m: &Measurements) -> Result<Vec<PathBuf>, WorkflowError> {
    let mut written = Vec::new();
    if m.goodput.is_some() {
        let p = out.join(format!("{prefix}goodput.csv"));
        write_text(&p, &goodput_csv(&m.goodput_events))?;
        written.push(p);
    }
    if m.rtt.is_some() {
        let p = out.join(format!("{prefix}ping.csv"));
        write_text(&p, &ping_csv(&m.pings))?;
        written.push(p);
    }
    Ok(written)
}

pub fn cmd_gen_state(sc: &Scenario, out: &Path) -> Result<Vec<PathBuf>, WorkflowError> {
    let states = gen_state(sc)?;
    let p = out.join("forwarding_diff.csv");
    let f = create(&p)?;
    write_forwarding_diff(&states, f)?;
    Ok(vec![p])
}

pub fn cmd_flows_gen(sc: &Scenario, out: &Path) -> Result<Vec<PathBuf>, WorkflowError> {
    sc.validate()?;
    let flows = background_flows(sc)?;
    let p = out.join("flows.csv");
    let f = create(&p)?;
    write_flows(&flows, f)?;
    Ok(vec![p])
}

pub fn cmd_simulate(sc: &Scenario, out: &Path) -> Result<Vec<PathBuf>, WorkflowError> {
    let prep = Prepared::new(sc)?;
    let res = prep.simulate(Some(sc.workload))?;
    let p = out.join("delivery_log.csv");
    let mut f = create(&p)?;
    res.log.write_csv(&mut f).map_err(|e| io_err(&p, e))?;
    f.flush().map_err(|e| io_err(&p, e))?;
    let mut written = vec![p];
    written.extend(measurement_files(out, "sim_", &measure(sc, &res.apps)?)?);
    Ok(written)
}

pub fn cmd_gen_traces(sc: &Scenario, out: &Path) -> Result<Vec<PathBuf>, WorkflowError> {
    let prep = Prepared::new(sc)?;
    let (fwd, ret, _) = prep.gen_traces()?;
    let pf = out.join("trace_forward.csv");
    let pr = out.join("trace_return.csv");
    write_trace(&pf, &fwd)?;
    write_trace(&pr, &ret)?;
    Ok(vec![pf, pr])
}

pub fn cmd_replay(
    sc: &Scenario,
    fwd: ChannelConfig,
    ret: ChannelConfig,
    out: &Path,
) -> Result<Vec<PathBuf>, WorkflowError> {
    let r = replay_virtual(sc, fwd, ret, sc.workload)?;
    let mut written = measurement_files(out, "replay_", &measure(sc, &r.apps)?)?;
    let p = out.join("replay_stats.json");
    let stats = serde_json::json!({ "forward": r.forward, "return": r.ret });
    write_text(&p, &serde_json::to_string_pretty(&stats).expect("stats serialize"))?;
    written.push(p);
    Ok(written)
}

/// Writes the report and series; a threshold miss is a validation failure
/// reported after every file is written.
pub fn cmd_validate(sc: &Scenario, out: &Path) -> Result<Vec<PathBuf>, WorkflowError> {
    let r = validate(sc, Thresholds::default())?;
    let mut written = Vec::new();
    let p = out.join("report.csv");
    write_text(&p, &report_csv(&r))?;
    written.push(p);
    for (name, c) in [("goodput", &r.goodput), ("rtt", &r.rtt)] {
        if let Some(c) = c {
            let p = out.join(format!("{name}_series.csv"));
            write_text(&p, &series_csv(c))?;
            written.push(p);
        }
    }
    let failed: Vec<String> = r
        .checks()
        .into_iter()
        .filter(|c| !c.2)
        .map(|(n, v, _)| format!("{n}={v:.4}"))
        .collect();
    if !failed.is_empty() {
        return Err(WorkflowError::Validation(failed.join(", ")));
    }
    Ok(written)
}
