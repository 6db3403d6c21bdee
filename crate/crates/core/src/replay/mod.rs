//! Trace-driven replay channel: per-record rate, delay, queue capacity and
//! loss applied to a packet stream, with a route-epoch reorder guard.

mod harness;
pub mod realtime;

use std::collections::VecDeque;
use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netsim::serialization_time;
use crate::tracefile::{TraceFile, TraceFileError};
use crate::tracer::TraceRecord;

pub use harness::{run_replay, ReplayOutput};

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error(transparent)]
    Trace(#[from] TraceFileError),
    #[error("i/o: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StartMode {
    #[default]
    Immediate,
    FirstPacketTrigger,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EndPolicy {
    #[default]
    HoldLast,
    DropAll,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplayDrop {
    Loss,
    Queue,
    /// Past the final record under `EndPolicy::DropAll`.
    EndOfTrace,
    /// No record with a positive rate follows the packet's start under `HoldLast`.
    NoRate,
}

impl ReplayDrop {
    pub const ALL: [ReplayDrop; 4] = [
        ReplayDrop::Loss,
        ReplayDrop::Queue,
        ReplayDrop::EndOfTrace,
        ReplayDrop::NoRate,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ReplayDrop::Loss => "loss",
            ReplayDrop::Queue => "queue",
            ReplayDrop::EndOfTrace => "end_of_trace",
            ReplayDrop::NoRate => "no_rate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Verdict {
    Dropped(ReplayDrop),
    DeliverAt(f64),
}

impl Verdict {
    pub fn release(&self) -> Option<f64> {
        match self {
            Verdict::DeliverAt(t) => Some(*t),
            Verdict::Dropped(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelConfig {
    pub trace: TraceFile,
    pub start_mode: StartMode,
    pub delay_offset_us: i64,
    pub loss_seed: u64,
    pub end_policy: EndPolicy,
}

impl ChannelConfig {
    pub fn new(trace: TraceFile) -> Self {
        Self {
            trace,
            start_mode: StartMode::Immediate,
            delay_offset_us: 0,
            loss_seed: 0,
            end_policy: EndPolicy::HoldLast,
        }
    }

    pub fn validate(&self) -> Result<(), ReplayError> {
        self.trace.validate()?;
        if self.trace.records.is_empty() {
            return Err(ReplayError::Config("trace has no records".into()));
        }
        crate::tracefile::apply_delay_offset(&self.trace, self.delay_offset_us)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub offered: u64,
    pub delivered: u64,
    pub dropped_loss: u64,
    pub dropped_queue: u64,
    pub dropped_end_of_trace: u64,
    pub dropped_no_rate: u64,
}

impl ChannelStats {
    pub fn dropped(&self, reason: ReplayDrop) -> u64 {
        match reason {
            ReplayDrop::Loss => self.dropped_loss,
            ReplayDrop::Queue => self.dropped_queue,
            ReplayDrop::EndOfTrace => self.dropped_end_of_trace,
            ReplayDrop::NoRate => self.dropped_no_rate,
        }
    }

    fn record(&mut self, v: &Verdict) {
        self.offered += 1;
        match v {
            Verdict::DeliverAt(_) => self.delivered += 1,
            Verdict::Dropped(ReplayDrop::Loss) => self.dropped_loss += 1,
            Verdict::Dropped(ReplayDrop::Queue) => self.dropped_queue += 1,
            Verdict::Dropped(ReplayDrop::EndOfTrace) => self.dropped_end_of_trace += 1,
            Verdict::Dropped(ReplayDrop::NoRate) => self.dropped_no_rate += 1,
        }
    }
}

/// Mutable replay state of one direction.
#[derive(Debug, Clone)]
pub struct ChannelState {
    pub t0: Option<f64>,
    pub cursor: usize,
    pub link_free_s: f64,
    pub current_epoch_route: Option<u64>,
    pub last_release_s: f64,
    last_arrival_s: f64,
    /// Serialization start times of admitted packets not yet on the wire.
    waiting: VecDeque<f64>,
    rng: ChaCha8Rng,
}

impl ChannelState {
    fn new(seed: u64, t0: Option<f64>) -> Self {
        Self {
            t0,
            cursor: 0,
            link_free_s: f64::NEG_INFINITY,
            current_epoch_route: None,
            last_release_s: f64::NEG_INFINITY,
            last_arrival_s: f64::NEG_INFINITY,
            waiting: VecDeque::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn queue_occupancy_pkts(&self) -> usize {
        self.waiting.len()
    }
}

/// One unidirectional replay channel.
#[derive(Debug, Clone)]
pub struct Channel {
    cfg: ChannelConfig,
    res_s: f64,
    state: ChannelState,
    stats: ChannelStats,
}

impl Channel {
    /// Immediate channels start at `open_s`; trigger channels wait for a packet.
    pub fn new(cfg: ChannelConfig, open_s: f64) -> Result<Self, ReplayError> {
        cfg.validate()?;
        let t0 = match cfg.start_mode {
            StartMode::Immediate => Some(open_s),
            StartMode::FirstPacketTrigger => None,
        };
        Ok(Self {
            res_s: cfg.trace.resolution_s(),
            state: ChannelState::new(cfg.loss_seed, t0),
            cfg,
            stats: ChannelStats::default(),
        })
    }

    pub fn config(&self) -> &ChannelConfig {
        &self.cfg
    }

    pub fn state(&self) -> &ChannelState {
        &self.state
    }

    pub fn stats(&self) -> &ChannelStats {
        &self.stats
    }

    pub fn started(&self) -> bool {
        self.state.t0.is_some()
    }

    /// Sets the epoch if replay has not started yet.
    pub fn trigger(&mut self, t0: f64) {
        if self.state.t0.is_none() {
            self.state.t0 = Some(t0);
        }
    }

    fn boundary(&self, t0: f64, idx: usize) -> f64 {
        t0 + idx as f64 * self.res_s
    }

    /// Unclamped index of the record covering `t`, consistent with `boundary`.
    fn raw_index(&self, t0: f64, t: f64) -> usize {
        let mut idx = ((t - t0) / self.res_s).floor().max(0.0) as usize;
        while idx > 0 && self.boundary(t0, idx) > t {
            idx -= 1;
        }
        while self.boundary(t0, idx + 1) <= t {
            idx += 1;
        }
        idx
    }

    fn record(&self, idx: usize) -> Option<&TraceRecord> {
        let recs = &self.cfg.trace.records;
        match recs.get(idx) {
            Some(r) => Some(r),
            None if self.cfg.end_policy == EndPolicy::HoldLast => recs.last(),
            None => None,
        }
    }

    /// Earliest time at or after `t` with a positive rate, and that rate.
    fn transmit_slot(&self, t0: f64, t: f64) -> Result<(f64, f64), ReplayDrop> {
        let len = self.cfg.trace.records.len();
        let mut idx = self.raw_index(t0, t);
        let mut start = t;
        loop {
            let r = self.record(idx).ok_or(ReplayDrop::EndOfTrace)?;
            if r.rate_bps > 0 {
                return Ok((start, r.rate_bps as f64));
            }
            if idx + 1 >= len && self.cfg.end_policy == EndPolicy::HoldLast {
                return Err(ReplayDrop::NoRate);
            }
            idx += 1;
            start = self.boundary(t0, idx);
        }
    }

    pub fn offer(&mut self, size_bytes: u32, arrival_s: f64) -> Result<Verdict, ReplayError> {
        if arrival_s < self.state.last_arrival_s || arrival_s.is_nan() {
            return Err(ReplayError::Usage(format!(
                "arrival {arrival_s} precedes previous arrival {}",
                self.state.last_arrival_s
            )));
        }
        self.trigger(arrival_s);
        let t0 = self.state.t0.expect("started");
        if arrival_s < t0 {
            return Err(ReplayError::Usage(format!(
                "arrival {arrival_s} precedes channel start {t0}"
            )));
        }
        self.state.last_arrival_s = arrival_s;
        let v = self.decide(t0, size_bytes, arrival_s);
        self.stats.record(&v);
        Ok(v)
    }

    fn decide(&mut self, t0: f64, size_bytes: u32, arrival_s: f64) -> Verdict {
        let st = &mut self.state;
        while st.waiting.front().is_some_and(|&s| s <= arrival_s) {
            st.waiting.pop_front();
        }
        let idx = self.raw_index(t0, arrival_s);
        self.state.cursor = idx.min(self.cfg.trace.records.len() - 1);
        let u: f64 = self.state.rng.random();
        let Some(r) = self.record(idx).copied() else {
            return Verdict::Dropped(ReplayDrop::EndOfTrace);
        };
        if u < r.loss_ratio {
            return Verdict::Dropped(ReplayDrop::Loss);
        }
        if r.queue_capacity_pkts < 0 || self.state.waiting.len() as i64 >= r.queue_capacity_pkts {
            return Verdict::Dropped(ReplayDrop::Queue);
        }
        let earliest = arrival_s.max(self.state.link_free_s);
        let (start, rate) = match self.transmit_slot(t0, earliest) {
            Ok(s) => s,
            Err(reason) => return Verdict::Dropped(reason),
        };
        let finish = start + serialization_time(size_bytes, rate);
        let st = &mut self.state;
        st.link_free_s = finish;
        if start > arrival_s {
            st.waiting.push_back(start);
        }
        let delay_us = (r.delay_us.max(0) + self.cfg.delay_offset_us).max(0);
        let mut release = finish + delay_us as f64 / 1e6;
        if st.current_epoch_route == Some(r.route_id) {
            release = release.max(st.last_release_s);
        } else {
            st.current_epoch_route = Some(r.route_id);
        }
        st.last_release_s = release;
        Verdict::DeliverAt(release)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PairSide {
    Forward,
    Return,
}

/// Forward and return channels with a shared start trigger.
#[derive(Debug, Clone)]
pub struct ChannelPair {
    pub forward: Channel,
    pub ret: Channel,
}

pub fn open_pair(fwd: ChannelConfig, ret: ChannelConfig, open_s: f64) -> Result<ChannelPair, ReplayError> {
    if fwd.trace.meta.resolution_ms != ret.trace.meta.resolution_ms {
        return Err(ReplayError::Config(format!(
            "trace resolutions differ: {} ms vs {} ms",
            fwd.trace.meta.resolution_ms, ret.trace.meta.resolution_ms
        )));
    }
    if fwd.start_mode != ret.start_mode {
        return Err(ReplayError::Config("start modes differ between directions".into()));
    }
    Ok(ChannelPair {
        forward: Channel::new(fwd, open_s)?,
        ret: Channel::new(ret, open_s)?,
    })
}

impl ChannelPair {
    pub fn channel(&self, side: PairSide) -> &Channel {
        match side {
            PairSide::Forward => &self.forward,
            PairSide::Return => &self.ret,
        }
    }

    pub fn offer(&mut self, side: PairSide, size_bytes: u32, arrival_s: f64) -> Result<Verdict, ReplayError> {
        if !self.forward.started() || !self.ret.started() {
            let t = self.forward.state.t0.or(self.ret.state.t0).unwrap_or(arrival_s);
            self.forward.trigger(t);
            self.ret.trigger(t);
        }
        match side {
            PairSide::Forward => self.forward.offer(size_bytes, arrival_s),
            PairSide::Return => self.ret.offer(size_bytes, arrival_s),
        }
    }

    /// Splits into independently lockable channels that still share the trigger.
    pub fn into_shared(self) -> SharedPair {
        SharedPair {
            forward: Arc::new(Mutex::new(self.forward)),
            ret: Arc::new(Mutex::new(self.ret)),
        }
    }
}

/// Pair whose channels are locked independently; the trigger takes both locks.
#[derive(Debug, Clone)]
pub struct SharedPair {
    pub forward: Arc<Mutex<Channel>>,
    pub ret: Arc<Mutex<Channel>>,
}

impl SharedPair {
    /// Fires the shared trigger at `t` if neither side has started.
    pub fn trigger(&self, t: f64) {
        let mut f = self.forward.lock().expect("channel lock");
        let mut r = self.ret.lock().expect("channel lock");
        let t = f.state.t0.or(r.state.t0).unwrap_or(t);
        f.trigger(t);
        r.trigger(t);
    }
}

/// Constant trace covering `duration_s`; handy for tests and calibration.
pub fn constant_trace(
    rate_bps: i64,
    delay_us: i64,
    capacity_pkts: i64,
    loss_ratio: f64,
    resolution_ms: u64,
    duration_s: f64,
) -> TraceFile {
    use crate::tracefile::{Direction, TraceMeta};
    let n = ((duration_s * 1000.0 / resolution_ms as f64).ceil() as u64).max(1);
    TraceFile {
        meta: TraceMeta::new("constant", Direction::Forward, resolution_ms, 0),
        records: (0..n)
            .map(|i| TraceRecord {
                t_ms: i * resolution_ms,
                delay_us,
                rate_bps,
                queue_capacity_pkts: capacity_pkts,
                loss_ratio,
                route_id: 1,
                bdp_pkts: None,
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chan(trace: TraceFile) -> Channel {
        Channel::new(ChannelConfig::new(trace), 0.0).unwrap()
    }

    fn with(mut tf: TraceFile, f: impl Fn(usize, &mut TraceRecord)) -> TraceFile {
        for (i, r) in tf.records.iter_mut().enumerate() {
            f(i, r);
        }
        tf
    }

    #[test]
    fn single_packet_idle_channel() {
        let mut c = chan(constant_trace(50_000_000, 20_000, 200, 0.0, 10, 0.01));
        let v = c.offer(1500, 0.0).unwrap();
        assert!((v.release().unwrap() - 0.020_24).abs() < 1e-12);
    }

    #[test]
    fn full_loss_drops_everything() {
        let mut c = chan(constant_trace(50_000_000, 20_000, 200, 1.0, 10, 1.0));
        for i in 0..100 {
            assert_eq!(c.offer(1500, i as f64 * 0.005).unwrap(), Verdict::Dropped(ReplayDrop::Loss));
        }
        assert_eq!(c.stats().dropped_loss, 100);
    }

    #[test]
    fn guard_prevents_reorder() {
        let tf = with(constant_trace(50_000_000, 20_000, 200, 0.0, 10, 0.05), |i, r| {
            if i >= 1 {
                r.delay_us = 15_000;
            }
        });
        let mut c = chan(tf);
        let a = c.offer(1500, 0.0099).unwrap().release().unwrap();
        let b = c.offer(1500, 0.0100).unwrap().release().unwrap();
        assert!(b >= a);
        assert_eq!(b, a);
    }

    #[test]
    fn new_route_resets_guard() {
        let tf = with(constant_trace(50_000_000, 20_000, 200, 0.0, 10, 0.05), |i, r| {
            if i >= 1 {
                r.delay_us = 15_000;
                r.route_id = 2;
            }
        });
        let mut c = chan(tf);
        let a = c.offer(1500, 0.0099).unwrap().release().unwrap();
        let b = c.offer(1500, 0.0100).unwrap().release().unwrap();
        assert!(b < a);
    }

    #[test]
    fn zero_rate_defers_to_next_positive_record() {
        let tf = with(constant_trace(50_000_000, 20_000, 200, 0.0, 10, 0.2), |i, r| {
            if (1..11).contains(&i) {
                r.rate_bps = 0;
            }
        });
        let mut c = chan(tf);
        let v = c.offer(1500, 0.015).unwrap().release().unwrap();
        assert!((v - (0.11 + 0.000_24 + 0.02)).abs() < 1e-12);
        assert_eq!(c.state().queue_occupancy_pkts(), 1);
        let w = c.offer(1500, 0.016).unwrap().release().unwrap();
        assert!((w - (0.11 + 0.000_48 + 0.02)).abs() < 1e-12);
        assert_eq!(c.state().queue_occupancy_pkts(), 2);
    }

    #[test]
    fn capacity_and_sentinels() {
        let mut c = chan(constant_trace(12_000_000, 0, 1, 0.0, 10, 1.0));
        assert!(c.offer(1500, 0.0).unwrap().release().is_some());
        assert!(c.offer(1500, 0.0).unwrap().release().is_some());
        assert_eq!(c.offer(1500, 0.0).unwrap(), Verdict::Dropped(ReplayDrop::Queue));
        let mut s = chan(constant_trace(-1, -1, -1, 0.0, 10, 1.0));
        assert_eq!(s.offer(1500, 0.0).unwrap(), Verdict::Dropped(ReplayDrop::Queue));
    }

    #[test]
    fn end_policies() {
        let tf = constant_trace(12_000_000, 1000, 10, 0.0, 10, 0.02);
        let mut hold = chan(tf.clone());
        assert!(hold.offer(1500, 5.0).unwrap().release().is_some());
        let mut cfg = ChannelConfig::new(tf);
        cfg.end_policy = EndPolicy::DropAll;
        let mut drop = Channel::new(cfg, 0.0).unwrap();
        assert_eq!(drop.offer(1500, 5.0).unwrap(), Verdict::Dropped(ReplayDrop::EndOfTrace));
    }

    #[test]
    fn arrival_regression_is_usage_error() {
        let mut c = chan(constant_trace(12_000_000, 1000, 10, 0.0, 10, 1.0));
        c.offer(100, 0.5).unwrap();
        assert!(matches!(c.offer(100, 0.4), Err(ReplayError::Usage(_))));
    }

    #[test]
    fn pair_trigger_modes() {
        let tf = constant_trace(12_000_000, 1000, 10, 0.0, 10, 1.0);
        let mut cfg = ChannelConfig::new(tf.clone());
        let p = open_pair(cfg.clone(), cfg.clone(), 2.0).unwrap();
        assert_eq!(p.forward.state().t0, Some(2.0));
        assert_eq!(p.ret.state().t0, Some(2.0));
        cfg.start_mode = StartMode::FirstPacketTrigger;
        let mut p = open_pair(cfg.clone(), cfg.clone(), 0.0).unwrap();
        assert!(!p.forward.started() && !p.ret.started());
        p.offer(PairSide::Return, 100, 3.5).unwrap();
        assert_eq!(p.forward.state().t0, Some(3.5));
        assert_eq!(p.ret.state().t0, Some(3.5));
        let mut odd = cfg;
        odd.trace.meta.resolution_ms = 20;
        odd.trace.records = vec![tf.records[0]];
        assert!(matches!(
            open_pair(odd, ChannelConfig::new(tf), 0.0),
            Err(ReplayError::Config(_))
        ));
    }

    #[test]
    fn loss_draws_are_seeded() {
        let tf = constant_trace(12_000_000, 0, 1000, 0.3, 10, 1.0);
        let run = |seed| {
            let mut cfg = ChannelConfig::new(tf.clone());
            cfg.loss_seed = seed;
            let mut c = Channel::new(cfg, 0.0).unwrap();
            (0..1000)
                .map(|i| c.offer(100, i as f64 * 0.001).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(1), run(1));
        assert_ne!(run(1), run(2));
        let lost = run(1).iter().filter(|v| v.release().is_none()).count() as f64;
        let sigma = (1000.0 * 0.3 * 0.7f64).sqrt();
        assert!((lost - 300.0).abs() < 3.0 * sigma);
    }
}

#[cfg(test)]
mod equivalence {
    use super::*;
    use crate::netsim::single_link::simulate_offered;
    use rand::Rng;

    #[test]
    fn constant_trace_matches_single_link() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let rate = rng.random_range(1..=100) as i64 * 1_000_000;
            let delay_us = rng.random_range(0..50_000);
            let cap = rng.random_range(0..20);
            let n = rng.random_range(1..200);
            let mut t = 0.0;
            let offered: Vec<(f64, u32)> = (0..n)
                .map(|_| {
                    if rng.random_bool(0.7) {
                        t += rng.random_range(0.0..0.002);
                    }
                    (t, rng.random_range(40..=1500))
                })
                .collect();
            let expect = simulate_offered(rate as f64, delay_us as f64 / 1e6, cap as usize, &offered);
            let mut c = Channel::new(
                ChannelConfig::new(constant_trace(rate, delay_us, cap, 0.0, 10, t + 1.0)),
                0.0,
            )
            .unwrap();
            let got: Vec<Option<f64>> = offered
                .iter()
                .map(|&(a, s)| c.offer(s, a).unwrap().release())
                .collect();
            assert_eq!(got, expect);
        }
    }

    #[test]
    fn exact_ties_match_single_link() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..100 {
            let cap = rng.random_range(0..5);
            let offered: Vec<(f64, u32)> = {
                let mut ms: Vec<u32> = (0..60).map(|_| rng.random_range(0..40)).collect();
                ms.sort();
                ms.into_iter().map(|m| (m as f64 * 0.001, 1500)).collect()
            };
            let expect = simulate_offered(12e6, 0.005, cap as usize, &offered);
            let mut c = Channel::new(
                ChannelConfig::new(constant_trace(12_000_000, 5000, cap, 0.0, 10, 1.0)),
                0.0,
            )
            .unwrap();
            let got: Vec<Option<f64>> = offered
                .iter()
                .map(|&(a, s)| c.offer(s, a).unwrap().release())
                .collect();
            assert_eq!(got, expect);
        }
    }
}
