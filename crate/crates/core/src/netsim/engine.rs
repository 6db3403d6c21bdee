use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use super::interface::Interface;
use super::log::{DeliveryLog, LogEntry, Outcome};
use super::network::{ConstellationNet, Network};
use super::{Admission, DropReason, NetsimError, PacketClass, SimConfig};
use crate::topology::{NodeId, RouteHasher};
use crate::tracer::{TraceSample, TraceSamples, TracerConfig};
use crate::traffic::{App, AppInstance, Emit, Payload, Side};

/// Time-based loss and pause rules applied to ground links.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Gates {
    pub handover_loss_s: f64,
    pub reconfig_interval_s: f64,
    pub reconfig_duration_s: f64,
}

impl Gates {
    /// End of the reconfiguration pause containing `t`, if any.
    pub fn pause_end(&self, t: f64) -> Option<f64> {
        if self.reconfig_interval_s <= 0.0 || self.reconfig_duration_s <= 0.0 {
            return None;
        }
        let start = (t / self.reconfig_interval_s).floor() * self.reconfig_interval_s;
        let end = start + self.reconfig_duration_s;
        (t >= start && t < end).then_some(end)
    }

    pub fn handover_dropping(&self, handovers: &[f64], t: f64) -> bool {
        if self.handover_loss_s <= 0.0 {
            return false;
        }
        let i = handovers.partition_point(|&e| e <= t);
        i > 0 && t < handovers[i - 1] + self.handover_loss_s
    }
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub log: DeliveryLog,
    pub apps: Vec<AppInstance>,
    pub trace: Option<TraceSamples>,
}

pub fn run_simulation(
    config: &SimConfig,
    apps: Vec<AppInstance>,
    tracer: Option<&TracerConfig>,
) -> Result<SimOutput, NetsimError> {
    let net = ConstellationNet::new(config)?;
    run_on_network(&net, config.gates(), config.duration_s, config.drain_s, apps, tracer)
}

/// Runs apps and the optional tracer over any network model. Apps and the
/// tracer stop emitting at `duration_s`; events are processed until
/// `duration_s + drain_s`.
pub fn run_on_network<N: Network>(
    net: &N,
    gates: Gates,
    duration_s: f64,
    drain_s: f64,
    apps: Vec<AppInstance>,
    tracer: Option<&TracerConfig>,
) -> Result<SimOutput, NetsimError> {
    let g = net.num_stations() as u32;
    for (i, app) in apps.iter().enumerate() {
        let (a, b) = app.endpoints();
        if a >= g || b >= g || a == b {
            return Err(NetsimError::Config(format!(
                "workload {i} uses stations ({a}, {b}) but the network has {g}"
            )));
        }
    }
    if let Some(t) = tracer {
        t.validate()
            .map_err(|e| NetsimError::Config(e.to_string()))?;
        if t.gs_a >= g || t.gs_b >= g {
            return Err(NetsimError::Config("tracer endpoints out of range".into()));
        }
    }
    let mut engine = Engine::new(net, gates, duration_s, apps, tracer.cloned());
    engine.run(duration_s + drain_s);
    Ok(engine.finish())
}

#[derive(Debug, Clone, Copy)]
enum Kind {
    Epoch(usize),
    TxDone(usize),
    Wake(usize),
    AppWake(usize),
    TraceEmit(usize),
    Arrive { key: usize, node: NodeId },
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    class: u8,
    seq: u64,
    kind: Kind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.class.cmp(&other.class))
            .then(self.seq.cmp(&other.seq))
    }
}

#[derive(Debug, Clone, Copy)]
struct Probe {
    forward: bool,
    k: usize,
    min_avail: f64,
    queue_avail: i64,
    pending_queue_avail: i64,
}

#[derive(Debug, Clone)]
struct Pkt {
    log_idx: Option<usize>,
    class: PacketClass,
    dst: NodeId,
    size: u32,
    created: f64,
    app: Option<(usize, Side)>,
    payload: Payload,
    route: RouteHasher,
    at: NodeId,
    next: NodeId,
    probe: Option<Probe>,
}

struct Engine<'a, N: Network> {
    net: &'a N,
    gates: Gates,
    duration_s: f64,
    ifaces: Vec<Interface>,
    gsl: Vec<bool>,
    wake_at: Vec<f64>,
    heap: BinaryHeap<Reverse<Event>>,
    seq: u64,
    epoch: usize,
    pkts: Vec<Option<Pkt>>,
    free: Vec<usize>,
    log: DeliveryLog,
    apps: Vec<AppInstance>,
    app_sched: Vec<Option<f64>>,
    tracer: Option<TracerConfig>,
    samples: [Vec<Option<TraceSample>>; 2],
    scratch: Vec<Emit>,
}

impl<'a, N: Network> Engine<'a, N> {
    fn new(
        net: &'a N,
        gates: Gates,
        duration_s: f64,
        apps: Vec<AppInstance>,
        tracer: Option<TracerConfig>,
    ) -> Self {
        let specs = net.interfaces();
        let ifaces = specs
            .iter()
            .map(|s| Interface::new(s.rate_bps, s.capacity, s.reserved_bps))
            .collect();
        let n_apps = apps.len();
        let mut e = Self {
            net,
            gates,
            duration_s,
            ifaces,
            gsl: specs.iter().map(|s| s.gsl).collect(),
            wake_at: vec![f64::NAN; specs.len()],
            heap: BinaryHeap::new(),
            seq: 0,
            epoch: 0,
            pkts: Vec::new(),
            free: Vec::new(),
            log: DeliveryLog::default(),
            apps,
            app_sched: vec![None; n_apps],
            tracer,
            samples: [Vec::new(), Vec::new()],
            scratch: Vec::new(),
        };
        for (k, &t) in net.epoch_starts().iter().enumerate().skip(1) {
            e.schedule(t, Kind::Epoch(k));
        }
        for i in 0..n_apps {
            e.reschedule_app(i);
        }
        if e.tracer.is_some() && duration_s > 0.0 {
            e.schedule(0.0, Kind::TraceEmit(0));
        }
        e
    }

    fn schedule(&mut self, time: f64, kind: Kind) {
        // Packet injections run after link-state changes at the same instant.
        let class = u8::from(matches!(
            kind,
            Kind::Arrive { .. } | Kind::AppWake(_) | Kind::TraceEmit(_)
        ));
        self.seq += 1;
        self.heap.push(Reverse(Event {
            time,
            class,
            seq: self.seq,
            kind,
        }));
    }

    fn run(&mut self, end: f64) {
        while let Some(Reverse(ev)) = self.heap.pop() {
            if ev.time > end {
                break;
            }
            let now = ev.time;
            match ev.kind {
                Kind::Epoch(k) => self.epoch = k,
                Kind::TxDone(i) => {
                    self.ifaces[i].set_in_service(false);
                    self.try_start(i, now);
                }
                Kind::Wake(i) => {
                    if self.wake_at[i] == now {
                        self.wake_at[i] = f64::NAN;
                    }
                    self.try_start(i, now);
                }
                Kind::AppWake(i) => {
                    if self.app_sched[i] != Some(now) {
                        continue;
                    }
                    self.app_sched[i] = None;
                    let mut out = std::mem::take(&mut self.scratch);
                    self.apps[i].on_wakeup(now, &mut out);
                    self.emit(i, &mut out, now);
                    self.scratch = out;
                    self.reschedule_app(i);
                }
                Kind::TraceEmit(k) => self.trace_emit(k, now),
                Kind::Arrive { key, node } => self.arrive(key, node, now),
            }
        }
    }

    fn reschedule_app(&mut self, i: usize) {
        let next = self.apps[i].next_wakeup();
        if next != self.app_sched[i] {
            self.app_sched[i] = next;
            if let Some(t) = next {
                self.schedule(t, Kind::AppWake(i));
            }
        }
    }

    fn alloc(&mut self, pkt: Pkt) -> usize {
        match self.free.pop() {
            Some(k) => {
                self.pkts[k] = Some(pkt);
                k
            }
            None => {
                self.pkts.push(Some(pkt));
                self.pkts.len() - 1
            }
        }
    }

    fn release(&mut self, key: usize) -> Pkt {
        let p = self.pkts[key].take().expect("live packet");
        self.free.push(key);
        p
    }

    fn pkt(&mut self, key: usize) -> &mut Pkt {
        self.pkts[key].as_mut().expect("live packet")
    }

    fn emit(&mut self, app: usize, out: &mut Vec<Emit>, now: f64) {
        let (a, b) = self.apps[app].endpoints();
        for e in out.drain(..) {
            let (src, dst) = match e.from {
                Side::A => (NodeId::gs(a), NodeId::gs(b)),
                Side::B => (NodeId::gs(b), NodeId::gs(a)),
            };
            let log_idx = self.log.entries.len();
            self.log.entries.push(LogEntry {
                packet_id: log_idx as u64,
                class: e.class,
                src,
                dst,
                created_s: now,
                outcome: Outcome::InFlight,
                route_id: None,
            });
            let key = self.alloc(Pkt {
                log_idx: Some(log_idx),
                class: e.class,
                dst,
                size: e.size_bytes,
                created: now,
                app: Some((app, e.from.other())),
                payload: e.payload,
                route: RouteHasher::default(),
                at: src,
                next: src,
                probe: None,
            });
            self.arrive(key, src, now);
        }
    }

    fn trace_emit(&mut self, k: usize, now: f64) {
        let cfg = self.tracer.clone().expect("tracer configured");
        for (forward, (s, d)) in [(true, (cfg.gs_a, cfg.gs_b)), (false, (cfg.gs_b, cfg.gs_a))] {
            self.samples[usize::from(!forward)].push(None);
            let key = self.alloc(Pkt {
                log_idx: None,
                class: PacketClass::TraceVirtual,
                dst: NodeId::gs(d),
                size: 0,
                created: now,
                app: None,
                payload: Payload::Cbr,
                route: RouteHasher::default(),
                at: NodeId::gs(s),
                next: NodeId::gs(s),
                probe: Some(Probe {
                    forward,
                    k,
                    min_avail: f64::INFINITY,
                    queue_avail: 0,
                    pending_queue_avail: 0,
                }),
            });
            self.arrive(key, NodeId::gs(s), now);
        }
        let next = (k + 1) as f64 * cfg.interval_s;
        if next < self.duration_s {
            self.schedule(next, Kind::TraceEmit(k + 1));
        }
    }

    fn arrive(&mut self, key: usize, node: NodeId, now: f64) {
        let epoch = self.epoch;
        let p = self.pkt(key);
        p.route.push(node);
        p.at = node;
        let dst = p.dst;
        if node == dst {
            self.deliver(key, now);
            return;
        }
        let Some(next) = self.net.next_hop(epoch, node, dst) else {
            self.drop_pkt(key, DropReason::NoRoute);
            return;
        };
        let i = self.net.interface(node, next);
        if self.gsl[i] && self.handover_blocks(node, next, now) {
            self.drop_pkt(key, DropReason::Handover);
            return;
        }
        let cap = self.ifaces[i].capacity as i64;
        let occ = self.ifaces[i].occupancy() as i64;
        let p = self.pkt(key);
        p.next = next;
        if let Some(pr) = p.probe.as_mut() {
            pr.pending_queue_avail = (cap - occ).max(0);
        }
        let (class, size) = (p.class, p.size);
        match self.ifaces[i].enqueue(key, class, size) {
            Admission::Dropped => self.drop_pkt(key, DropReason::Queue),
            Admission::Accepted => self.try_start(i, now),
        }
    }

    fn handover_blocks(&self, node: NodeId, next: NodeId, now: f64) -> bool {
        [node, next].iter().any(|n| {
            n.is_station()
                && self
                    .gates
                    .handover_dropping(self.net.handovers(n.index as usize), now)
        })
    }

    fn schedule_wake(&mut self, i: usize, t: f64) {
        if !t.is_finite() || self.wake_at[i] == t {
            return;
        }
        self.wake_at[i] = t;
        self.schedule(t, Kind::Wake(i));
    }

    fn try_start(&mut self, i: usize, now: f64) {
        loop {
            if self.ifaces[i].in_service() {
                return;
            }
            if self.gsl[i] {
                if let Some(end) = self.gates.pause_end(now) {
                    if self.ifaces[i].queue_len() > 0 {
                        self.schedule_wake(i, end);
                    }
                    return;
                }
            }
            let q = match self.ifaces[i].pick(now) {
                Ok(Some(q)) => q,
                Ok(None) => return,
                Err(t) => {
                    self.schedule_wake(i, t);
                    return;
                }
            };
            let (at, next) = {
                let p = self.pkt(q.key);
                (p.at, p.next)
            };
            let prop = self.net.propagation(at, next, now);
            if q.class.is_virtual() {
                let avail = self.ifaces[i].available_bandwidth(now);
                if let Some(pr) = self.pkt(q.key).probe.as_mut() {
                    if avail < pr.min_avail {
                        pr.min_avail = avail;
                        pr.queue_avail = pr.pending_queue_avail;
                    }
                }
                self.schedule(now + prop, Kind::Arrive { key: q.key, node: next });
                continue;
            }
            let finish = self.ifaces[i].serialize(q.size, q.class, now);
            self.ifaces[i].set_in_service(true);
            self.schedule(finish, Kind::TxDone(i));
            self.schedule(finish + prop, Kind::Arrive { key: q.key, node: next });
            return;
        }
    }

    fn deliver(&mut self, key: usize, now: f64) {
        let p = self.release(key);
        let route = p.route.finish().expect("path has nodes");
        if let Some(pr) = p.probe {
            let s = TraceSample::delivered(p.created, now - p.created, pr.min_avail, pr.queue_avail, route);
            self.samples[usize::from(!pr.forward)][pr.k] = Some(s);
            return;
        }
        if let Some(idx) = p.log_idx {
            let e = &mut self.log.entries[idx];
            e.outcome = Outcome::Delivered(now);
            e.route_id = Some(route);
        }
        if let Some((app, side)) = p.app {
            let mut out = std::mem::take(&mut self.scratch);
            self.apps[app].on_deliver(now, side, p.payload, &mut out);
            self.emit(app, &mut out, now);
            self.scratch = out;
            self.reschedule_app(app);
        }
    }

    fn drop_pkt(&mut self, key: usize, reason: DropReason) {
        let p = self.release(key);
        if let Some(pr) = p.probe {
            self.samples[usize::from(!pr.forward)][pr.k] = Some(TraceSample::dropped(p.created));
            return;
        }
        if let Some(idx) = p.log_idx {
            let e = &mut self.log.entries[idx];
            e.outcome = Outcome::Dropped(reason);
            e.route_id = p.route.finish();
        }
    }

    fn finish(self) -> SimOutput {
        let trace = self.tracer.as_ref().map(|cfg| {
            let fill = |v: &[Option<TraceSample>]| {
                v.iter()
                    .enumerate()
                    .map(|(k, s)| s.unwrap_or_else(|| TraceSample::dropped(k as f64 * cfg.interval_s)))
                    .collect::<Vec<_>>()
            };
            TraceSamples {
                forward: fill(&self.samples[0]),
                ret: fill(&self.samples[1]),
            }
        });
        let mut log = self.log;
        for p in self.pkts.iter().flatten() {
            if let Some(idx) = p.log_idx {
                log.entries[idx].route_id = p.route.finish();
            }
        }
        SimOutput {
            log,
            apps: self.apps,
            trace,
        }
    }
}
