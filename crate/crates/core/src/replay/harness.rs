//! Virtual-time driver running application models over a channel pair.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use super::{ChannelPair, ChannelStats, PairSide, ReplayError, Verdict};
use crate::traffic::{App, AppInstance, Emit, Payload, Side};

#[derive(Debug, Clone)]
pub struct ReplayOutput {
    pub apps: Vec<AppInstance>,
    pub forward: ChannelStats,
    pub ret: ChannelStats,
    /// `(direction, offered_s, verdict)` per packet in offer order.
    pub packets: Vec<(PairSide, f64, Verdict)>,
}

#[derive(Debug, Clone, Copy)]
enum Kind {
    AppWake(usize),
    Deliver { app: usize, at: Side, payload: Payload },
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
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
        self.time.total_cmp(&other.time).then(self.seq.cmp(&other.seq))
    }
}

struct Driver {
    pair: ChannelPair,
    apps: Vec<AppInstance>,
    sched: Vec<Option<f64>>,
    heap: BinaryHeap<Reverse<Event>>,
    seq: u64,
    packets: Vec<(PairSide, f64, Verdict)>,
    scratch: Vec<Emit>,
}

impl Driver {
    fn push(&mut self, time: f64, kind: Kind) {
        self.seq += 1;
        self.heap.push(Reverse(Event {
            time,
            seq: self.seq,
            kind,
        }));
    }

    fn reschedule(&mut self, i: usize) {
        let next = self.apps[i].next_wakeup();
        if next != self.sched[i] {
            self.sched[i] = next;
            if let Some(t) = next {
                self.push(t, Kind::AppWake(i));
            }
        }
    }

    fn emit(&mut self, app: usize, out: &mut Vec<Emit>, now: f64) -> Result<(), ReplayError> {
        for e in out.drain(..) {
            let side = match e.from {
                Side::A => PairSide::Forward,
                Side::B => PairSide::Return,
            };
            let v = self.pair.offer(side, e.size_bytes, now)?;
            self.packets.push((side, now, v));
            if let Verdict::DeliverAt(t) = v {
                self.push(
                    t,
                    Kind::Deliver {
                        app,
                        at: e.from.other(),
                        payload: e.payload,
                    },
                );
            }
        }
        Ok(())
    }
}

/// Runs `apps` between the two ends of `pair` until `duration_s + drain_s`.
/// Apps send during `[0, duration_s)` by their own schedules; A sends on the
/// forward channel and B on the return channel.
pub fn run_replay(
    pair: ChannelPair,
    apps: Vec<AppInstance>,
    duration_s: f64,
    drain_s: f64,
) -> Result<ReplayOutput, ReplayError> {
    if !(duration_s >= 0.0 && drain_s >= 0.0) {
        return Err(ReplayError::Config("duration and drain must be non-negative".into()));
    }
    let n = apps.len();
    let mut d = Driver {
        pair,
        apps,
        sched: vec![None; n],
        heap: BinaryHeap::new(),
        seq: 0,
        packets: Vec::new(),
        scratch: Vec::new(),
    };
    for i in 0..n {
        d.reschedule(i);
    }
    let end = duration_s + drain_s;
    while let Some(Reverse(ev)) = d.heap.pop() {
        if ev.time > end {
            break;
        }
        let now = ev.time;
        let mut out = std::mem::take(&mut d.scratch);
        let app = match ev.kind {
            Kind::AppWake(i) => {
                if d.sched[i] != Some(now) {
                    d.scratch = out;
                    continue;
                }
                d.sched[i] = None;
                d.apps[i].on_wakeup(now, &mut out);
                i
            }
            Kind::Deliver { app, at, payload } => {
                d.apps[app].on_deliver(now, at, payload, &mut out);
                app
            }
        };
        d.emit(app, &mut out, now)?;
        d.scratch = out;
        d.reschedule(app);
    }
    Ok(ReplayOutput {
        forward: d.pair.forward.stats().clone(),
        ret: d.pair.ret.stats().clone(),
        apps: d.apps,
        packets: d.packets,
    })
}
