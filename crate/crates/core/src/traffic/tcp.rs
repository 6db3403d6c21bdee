use std::collections::BTreeMap;

use super::{App, Emit, Payload, Side};
use crate::netsim::{PacketClass, PACKET_SIZE_BYTES};

pub const CUBIC_C: f64 = 0.4;
pub const CUBIC_BETA: f64 = 0.7;
pub const MSS_BYTES: u32 = 1440;
pub const ACK_SIZE_BYTES: u32 = 64;
pub const RTO_S: f64 = 1.0;
const INITIAL_CWND: f64 = 10.0;
/// Per-ack growth limit in segments (appropriate byte counting, L = 2).
pub const ABC_LIMIT: u32 = 2;
pub const MAX_SACK_BLOCKS: usize = 3;
const DUP_THRESH: u64 = 3;
const PACING_RATIO_SS: f64 = 2.0;
const PACING_RATIO_CA: f64 = 1.2;
const HYSTART_MIN_SAMPLES: u32 = 8;
const HYSTART_ETA_MIN_S: f64 = 0.004;
const HYSTART_ETA_MAX_S: f64 = 0.016;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CcState {
    pub cwnd_pkts: f64,
    pub ssthresh_pkts: f64,
    pub w_max_pkts: f64,
    pub epoch_start_s: f64,
    pub k_s: f64,
    pub rtt_estimate_s: f64,
    pub in_slow_start: bool,
}

impl Default for CcState {
    fn default() -> Self {
        Self {
            cwnd_pkts: INITIAL_CWND,
            ssthresh_pkts: f64::INFINITY,
            w_max_pkts: 0.0,
            epoch_start_s: 0.0,
            k_s: 0.0,
            rtt_estimate_s: 0.0,
            in_slow_start: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CcEvent {
    Ack { n: u32 },
    Loss,
    Timeout,
    RttSample(f64),
    /// Delay-based end of slow start at the current window.
    SlowStartExit,
}

/// CUBIC window `t` seconds into the current epoch.
pub fn cubic_window(cc: &CcState, t: f64) -> f64 {
    CUBIC_C * (t - cc.k_s).powi(3) + cc.w_max_pkts
}

fn new_epoch(cc: &mut CcState, now: f64) {
    cc.w_max_pkts = cc.cwnd_pkts;
    cc.ssthresh_pkts = (CUBIC_BETA * cc.cwnd_pkts).max(2.0);
    cc.epoch_start_s = now;
    cc.k_s = (cc.w_max_pkts * (1.0 - CUBIC_BETA) / CUBIC_C).cbrt();
}

pub fn tcp_model_step(cc: &CcState, event: CcEvent, now: f64) -> CcState {
    let mut s = *cc;
    match event {
        CcEvent::Ack { n } => {
            let n = n.min(ABC_LIMIT) as f64;
            if s.in_slow_start {
                s.cwnd_pkts += n;
                if s.cwnd_pkts >= s.ssthresh_pkts {
                    s.in_slow_start = false;
                    s.w_max_pkts = s.cwnd_pkts;
                    s.epoch_start_s = now;
                    s.k_s = 0.0;
                }
            } else {
                let target = cubic_window(&s, now - s.epoch_start_s);
                s.cwnd_pkts = s.cwnd_pkts.max(target.min(s.cwnd_pkts + n));
            }
        }
        CcEvent::Loss => {
            new_epoch(&mut s, now);
            s.cwnd_pkts = s.ssthresh_pkts;
            s.in_slow_start = false;
        }
        CcEvent::Timeout => {
            new_epoch(&mut s, now);
            s.cwnd_pkts = 1.0;
            s.in_slow_start = true;
        }
        CcEvent::SlowStartExit => {
            if s.in_slow_start {
                s.in_slow_start = false;
                s.ssthresh_pkts = s.cwnd_pkts.max(2.0);
                s.w_max_pkts = s.cwnd_pkts;
                s.epoch_start_s = now;
                s.k_s = 0.0;
            }
        }
        CcEvent::RttSample(rtt) => {
            s.rtt_estimate_s = if s.rtt_estimate_s > 0.0 {
                0.875 * s.rtt_estimate_s + 0.125 * rtt
            } else {
                rtt
            };
        }
    }
    s
}

/// SACK blocks carried on each ack, `(start, end)` half-open; empty when `start == end`.
pub type SackBlocks = [(u64, u64); MAX_SACK_BLOCKS];

/// Disjoint half-open sequence ranges.
#[derive(Debug, Clone, Default)]
struct RangeSet {
    ranges: BTreeMap<u64, u64>,
}

impl RangeSet {
    fn insert(&mut self, start: u64, end: u64) {
        if start >= end {
            return;
        }
        let (mut s, mut e) = (start, end);
        if let Some((&ps, &pe)) = self.ranges.range(..=s).next_back() {
            if pe >= s {
                s = ps;
                e = e.max(pe);
            }
        }
        let absorbed: Vec<(u64, u64)> = self.ranges.range(s..=e).map(|(&a, &b)| (a, b)).collect();
        for (a, b) in absorbed {
            self.ranges.remove(&a);
            e = e.max(b);
        }
        self.ranges.insert(s, e);
    }

    fn contains(&self, x: u64) -> bool {
        self.ranges.range(..=x).next_back().is_some_and(|(_, &e)| x < e)
    }

    fn block_containing(&self, x: u64) -> Option<(u64, u64)> {
        self.ranges
            .range(..=x)
            .next_back()
            .filter(|(_, &e)| x < e)
            .map(|(&s, &e)| (s, e))
    }

    /// Drops everything below `x`.
    fn trim_below(&mut self, x: u64) {
        let mut keep = self.ranges.split_off(&x);
        if let Some((_, &e)) = self.ranges.iter().next_back() {
            if e > x {
                keep.insert(x, e);
            }
        }
        self.ranges = keep;
    }

    /// First position at or after `x` not covered by a range.
    fn skip(&self, x: u64) -> u64 {
        self.block_containing(x).map_or(x, |(_, e)| e)
    }

    fn count_below(&self, x: u64) -> u64 {
        self.ranges
            .iter()
            .take_while(|(&s, _)| s < x)
            .map(|(&s, &e)| e.min(x) - s)
            .sum()
    }

    /// Smallest `y` with at least `k` covered positions at or above it.
    fn kth_from_top(&self, k: u64) -> Option<u64> {
        let mut left = k;
        for (&s, &e) in self.ranges.iter().rev() {
            if e - s >= left {
                return Some(e - left);
            }
            left -= e - s;
        }
        None
    }
}

/// Greedy bulk sender on A with an always-acking SACK receiver on B.
/// Loss recovery follows the conservative SACK scoreboard: a hole is lost
/// once three segments above it are selectively acked, and transmission is
/// paced by the pipe estimate. A fixed retransmission timeout falls back to
/// resending everything not yet acknowledged. Slow start also ends on a
/// round-over-round RTT increase.
#[derive(Debug, Clone)]
pub struct SpeedtestApp {
    a: u32,
    b: u32,
    start_s: f64,
    end_s: f64,
    started: bool,
    cc: CcState,
    next_seq: u64,
    snd_una: u64,
    high_sent: u64,
    sacked: RangeSet,
    retransmitted: RangeSet,
    in_recovery: bool,
    recover: u64,
    rto_recover: u64,
    round_end: u64,
    round_min_rtt: f64,
    last_round_min_rtt: f64,
    round_samples: u32,
    rto_deadline: Option<f64>,
    rcv_next: u64,
    received: RangeSet,
    goodput_log: Vec<(f64, u64)>,
    cwnd_log: Vec<(f64, f64)>,
    losses: u32,
    timeouts: u32,
    next_send_s: f64,
    pace_wake: Option<f64>,
}

impl SpeedtestApp {
    pub fn new(a: u32, b: u32, start_s: f64, duration_s: f64) -> Self {
        Self {
            a,
            b,
            start_s,
            end_s: start_s + duration_s,
            started: false,
            cc: CcState::default(),
            next_seq: 0,
            snd_una: 0,
            high_sent: 0,
            sacked: RangeSet::default(),
            retransmitted: RangeSet::default(),
            in_recovery: false,
            recover: 0,
            rto_recover: 0,
            round_end: 0,
            round_min_rtt: f64::INFINITY,
            last_round_min_rtt: f64::INFINITY,
            round_samples: 0,
            rto_deadline: None,
            rcv_next: 0,
            received: RangeSet::default(),
            goodput_log: Vec::new(),
            cwnd_log: Vec::new(),
            losses: 0,
            timeouts: 0,
            next_send_s: f64::NEG_INFINITY,
            pace_wake: None,
        }
    }

    pub fn cc(&self) -> &CcState {
        &self.cc
    }

    /// `(arrival time, payload bytes)` of each first-time segment at the receiver.
    pub fn goodput_log(&self) -> &[(f64, u64)] {
        &self.goodput_log
    }

    pub fn cwnd_log(&self) -> &[(f64, f64)] {
        &self.cwnd_log
    }

    pub fn delivered_bytes(&self) -> u64 {
        self.goodput_log.iter().map(|&(_, b)| b).sum()
    }

    /// `(fast recoveries, timeouts)`.
    pub fn loss_events(&self) -> (u32, u32) {
        (self.losses, self.timeouts)
    }

    pub fn window_s(&self) -> (f64, f64) {
        (self.start_s, self.end_s)
    }

    fn data(seq: u64, now: f64) -> Emit {
        Emit {
            from: Side::A,
            size_bytes: PACKET_SIZE_BYTES,
            class: PacketClass::Transport,
            payload: Payload::Data { seq, ts: now },
        }
    }

    /// Segments below this mark that are not selectively acked count as lost.
    fn lost_mark(&self) -> u64 {
        self.sacked
            .kth_from_top(DUP_THRESH)
            .map_or(self.snd_una, |m| m.clamp(self.snd_una, self.next_seq))
    }

    fn sacked_below(&self, x: u64) -> u64 {
        self.sacked.count_below(x)
    }

    /// Estimated segments in the network.
    fn pipe(&self) -> u64 {
        let mark = self.lost_mark();
        let outstanding = self.next_seq - self.snd_una;
        let sacked = self.sacked_below(self.next_seq);
        let lost = (mark - self.snd_una) - self.sacked_below(mark);
        let rexmit = self.retransmitted.count_below(mark) - self.retransmitted_sacked(mark);
        outstanding - sacked - lost + rexmit
    }

    fn retransmitted_sacked(&self, mark: u64) -> u64 {
        self.retransmitted
            .ranges
            .iter()
            .take_while(|(&s, _)| s < mark)
            .map(|(&s, &e)| (s..e.min(mark)).filter(|&x| self.sacked.contains(x)).count() as u64)
            .sum()
    }

    /// Next lost hole not yet retransmitted in this recovery.
    fn next_hole(&self) -> Option<u64> {
        let mark = self.lost_mark();
        let mut x = self.snd_una;
        while x < mark {
            let y = self.retransmitted.skip(self.sacked.skip(x));
            if y == x {
                return Some(x);
            }
            x = y;
        }
        None
    }

    fn fill(&mut self, now: f64, out: &mut Vec<Emit>) {
        if now >= self.end_s {
            return;
        }
        let window = self.cc.cwnd_pkts.floor().max(1.0) as u64;
        let mut pipe = self.pipe();
        self.pace_wake = None;
        while pipe < window {
            if let Some(gap) = self.pacing_gap_s() {
                if self.next_send_s > now {
                    self.pace_wake = Some(self.next_send_s);
                    break;
                }
                self.next_send_s = self.next_send_s.max(now) + gap;
            }
            if self.in_recovery {
                if let Some(hole) = self.next_hole() {
                    out.push(Self::data(hole, now));
                    self.retransmitted.insert(hole, hole + 1);
                    pipe += 1;
                    continue;
                }
            }
            self.next_seq = self.sacked.skip(self.next_seq);
            out.push(Self::data(self.next_seq, now));
            self.next_seq += 1;
            pipe += 1;
        }
        self.high_sent = self.high_sent.max(self.next_seq);
        if self.rto_deadline.is_none() && self.next_seq > self.snd_una {
            self.rto_deadline = Some(now + RTO_S);
        }
    }

    /// Departure spacing at the pacing rate, once an RTT estimate exists.
    fn pacing_gap_s(&self) -> Option<f64> {
        let srtt = self.cc.rtt_estimate_s;
        if srtt <= 0.0 {
            return None;
        }
        let ratio = if self.cc.in_slow_start { PACING_RATIO_SS } else { PACING_RATIO_CA };
        Some(srtt / (ratio * self.cc.cwnd_pkts.max(1.0)))
    }

    fn on_ack(&mut self, now: f64, ack: u64, ts: f64, sack: SackBlocks, out: &mut Vec<Emit>) {
        if now >= self.end_s {
            return;
        }
        self.cc = tcp_model_step(&self.cc, CcEvent::RttSample(now - ts), now);
        self.delay_exit_check(now, now - ts, ack);
        for (s, e) in sack {
            self.sacked.insert(s.max(ack), e.min(self.high_sent));
        }
        if ack > self.snd_una {
            let n = ack - self.snd_una;
            self.snd_una = ack;
            self.next_seq = self.next_seq.max(ack);
            self.sacked.trim_below(ack);
            self.retransmitted.trim_below(ack);
            if self.in_recovery && ack >= self.recover {
                self.in_recovery = false;
                self.retransmitted = RangeSet::default();
            }
            if !self.in_recovery {
                self.cc = tcp_model_step(&self.cc, CcEvent::Ack { n: n.min(u32::MAX as u64) as u32 }, now);
            }
            self.rto_deadline = (self.next_seq > self.snd_una).then_some(now + RTO_S);
        }
        if !self.in_recovery && self.snd_una >= self.rto_recover && self.lost_mark() > self.snd_una {
            self.cc = tcp_model_step(&self.cc, CcEvent::Loss, now);
            self.losses += 1;
            self.in_recovery = true;
            self.recover = self.next_seq;
        }
        self.fill(now, out);
        self.cwnd_log.push((now, self.cc.cwnd_pkts));
    }

    /// Leaves slow start once the minimum RTT of a round rises clearly
    /// above the previous round's.
    fn delay_exit_check(&mut self, now: f64, rtt: f64, ack: u64) {
        if !self.cc.in_slow_start {
            return;
        }
        self.round_min_rtt = self.round_min_rtt.min(rtt);
        self.round_samples += 1;
        if self.last_round_min_rtt.is_finite() && self.round_samples >= HYSTART_MIN_SAMPLES {
            let eta = (self.last_round_min_rtt / 8.0).clamp(HYSTART_ETA_MIN_S, HYSTART_ETA_MAX_S);
            if self.round_min_rtt >= self.last_round_min_rtt + eta {
                self.cc = tcp_model_step(&self.cc, CcEvent::SlowStartExit, now);
                return;
            }
        }
        if ack >= self.round_end {
            self.last_round_min_rtt = self.round_min_rtt;
            self.round_min_rtt = f64::INFINITY;
            self.round_samples = 0;
            self.round_end = self.next_seq.max(ack + 1);
        }
    }

    /// Blocks for an ack: the one holding `latest` first, then the highest others.
    fn sack_blocks(&self, latest: u64) -> SackBlocks {
        let mut blocks = [(0, 0); MAX_SACK_BLOCKS];
        let first = self.received.block_containing(latest);
        let mut i = 0;
        if let Some(b) = first {
            blocks[0] = b;
            i = 1;
        }
        for (&s, &e) in self.received.ranges.iter().rev() {
            if i == MAX_SACK_BLOCKS {
                break;
            }
            if Some((s, e)) != first {
                blocks[i] = (s, e);
                i += 1;
            }
        }
        blocks
    }

    fn on_data(&mut self, now: f64, seq: u64, ts: f64, out: &mut Vec<Emit>) {
        let fresh = seq >= self.rcv_next && !self.received.contains(seq);
        if fresh {
            self.goodput_log.push((now, MSS_BYTES as u64));
            if seq == self.rcv_next {
                self.rcv_next = self.received.skip(seq + 1);
                self.received.trim_below(self.rcv_next);
            } else {
                self.received.insert(seq, seq + 1);
            }
        }
        out.push(Emit {
            from: Side::B,
            size_bytes: ACK_SIZE_BYTES,
            class: PacketClass::Transport,
            payload: Payload::Ack {
                ack: self.rcv_next,
                ts,
                sack: self.sack_blocks(seq),
            },
        });
    }
}

impl App for SpeedtestApp {
    fn endpoints(&self) -> (u32, u32) {
        (self.a, self.b)
    }

    fn next_wakeup(&self) -> Option<f64> {
        if !self.started {
            return Some(self.start_s);
        }
        let rto = self.rto_deadline.filter(|&t| t < self.end_s);
        let pace = self.pace_wake.filter(|&t| t < self.end_s);
        match (rto, pace) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    fn on_wakeup(&mut self, now: f64, out: &mut Vec<Emit>) {
        if !self.started {
            self.started = true;
            self.cc.epoch_start_s = now;
            self.fill(now, out);
            self.cwnd_log.push((now, self.cc.cwnd_pkts));
            return;
        }
        if self.pace_wake.is_some_and(|t| t <= now) {
            self.fill(now, out);
        }
        if self.rto_deadline.is_some_and(|t| t <= now) {
            self.cc = tcp_model_step(&self.cc, CcEvent::Timeout, now);
            self.timeouts += 1;
            self.rto_recover = self.high_sent;
            self.next_seq = self.snd_una;
            self.round_end = self.snd_una;
            self.round_min_rtt = f64::INFINITY;
            self.last_round_min_rtt = f64::INFINITY;
            self.round_samples = 0;
            self.in_recovery = false;
            self.retransmitted = RangeSet::default();
            self.rto_deadline = None;
            self.fill(now, out);
            self.cwnd_log.push((now, self.cc.cwnd_pkts));
        }
    }

    fn on_deliver(&mut self, now: f64, at: Side, payload: Payload, out: &mut Vec<Emit>) {
        match (at, payload) {
            (Side::B, Payload::Data { seq, ts }) => self.on_data(now, seq, ts, out),
            (Side::A, Payload::Ack { ack, ts, sack }) => self.on_ack(now, ack, ts, sack, out),
            _ => {}
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn after_loss(cwnd: f64) -> CcState {
        let cc = CcState {
            cwnd_pkts: cwnd,
            in_slow_start: false,
            ..CcState::default()
        };
        tcp_model_step(&cc, CcEvent::Loss, 10.0)
    }

    #[test]
    fn loss_sets_beta_window() {
        let cc = after_loss(100.0);
        assert!((cc.ssthresh_pkts - 70.0).abs() < 1e-12);
        assert_eq!(cc.cwnd_pkts, cc.ssthresh_pkts);
        assert_eq!(cc.w_max_pkts, 100.0);
        assert!((cc.k_s - 75.0f64.cbrt()).abs() < 1e-12);
    }

    #[test]
    fn cubic_is_continuous_and_hits_w_max_at_k() {
        for w in [3.0, 10.0, 100.0, 1234.5] {
            let cc = after_loss(w);
            assert_eq!(cubic_window(&cc, cc.k_s), cc.w_max_pkts);
            assert!((cubic_window(&cc, 0.0) - cc.cwnd_pkts).abs() < 1e-9 * w.max(1.0));
        }
    }

    #[test]
    fn slow_start_and_avoidance_growth() {
        let mut cc = CcState {
            ssthresh_pkts: 20.0,
            ..CcState::default()
        };
        cc = tcp_model_step(&cc, CcEvent::Ack { n: 5 }, 0.1);
        assert_eq!(cc.cwnd_pkts, 10.0 + ABC_LIMIT as f64);
        assert!(cc.in_slow_start);
        for _ in 0..4 {
            cc = tcp_model_step(&cc, CcEvent::Ack { n: 2 }, 0.2);
        }
        assert!(!cc.in_slow_start);
        assert_eq!(cc.w_max_pkts, 20.0);
        let before = cc.cwnd_pkts;
        cc = tcp_model_step(&cc, CcEvent::Ack { n: 1 }, 1.2);
        assert!(cc.cwnd_pkts > before && cc.cwnd_pkts <= before + 1.0);
    }

    #[test]
    fn timeout_restarts_slow_start() {
        let cc = CcState {
            cwnd_pkts: 40.0,
            in_slow_start: false,
            ..CcState::default()
        };
        let t = tcp_model_step(&cc, CcEvent::Timeout, 3.0);
        assert_eq!(t.cwnd_pkts, 1.0);
        assert_eq!(t.ssthresh_pkts, 28.0);
        assert!(t.in_slow_start);
        let small = tcp_model_step(&CcState { cwnd_pkts: 1.0, ..cc }, CcEvent::Loss, 0.0);
        assert_eq!(small.ssthresh_pkts, 2.0);
    }

    #[test]
    fn identical_event_sequences_give_identical_states() {
        let events = [
            CcEvent::Ack { n: 3 },
            CcEvent::RttSample(0.04),
            CcEvent::Loss,
            CcEvent::Ack { n: 1 },
            CcEvent::Timeout,
            CcEvent::Ack { n: 2 },
        ];
        let run = || {
            let mut cc = CcState::default();
            for (i, e) in events.iter().enumerate() {
                cc = tcp_model_step(&cc, *e, i as f64 * 0.3);
            }
            cc
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn receiver_buffers_out_of_order_and_acks_cumulatively() {
        let mut app = SpeedtestApp::new(0, 1, 0.0, 10.0);
        let mut out = Vec::new();
        app.on_deliver(0.1, Side::B, Payload::Data { seq: 1, ts: 0.0 }, &mut out);
        app.on_deliver(0.2, Side::B, Payload::Data { seq: 0, ts: 0.0 }, &mut out);
        let acks: Vec<(u64, (u64, u64))> = out
            .iter()
            .map(|e| match e.payload {
                Payload::Ack { ack, sack, .. } => (ack, sack[0]),
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(acks, vec![(0, (1, 2)), (2, (0, 0))]);
        assert_eq!(app.delivered_bytes(), 2 * MSS_BYTES as u64);
    }

    #[test]
    fn range_set_merges_and_counts() {
        let mut r = RangeSet::default();
        r.insert(5, 7);
        r.insert(9, 10);
        r.insert(7, 9);
        assert_eq!(r.ranges.len(), 1);
        assert_eq!(r.block_containing(6), Some((5, 10)));
        r.insert(20, 23);
        assert_eq!(r.count_below(21), 6);
        assert_eq!(r.kth_from_top(3), Some(20));
        assert_eq!(r.kth_from_top(4), Some(9));
        assert_eq!(r.kth_from_top(9), None);
        assert_eq!(r.skip(5), 10);
        r.trim_below(8);
        assert_eq!(r.count_below(100), 5);
        assert!(!r.contains(7) && r.contains(8));
    }

    #[test]
    fn sack_recovery_repairs_many_holes_without_timeout() {
        let mut app = SpeedtestApp::new(0, 1, 0.0, 10.0);
        let mut out = Vec::new();
        app.cc.cwnd_pkts = 40.0;
        app.cc.in_slow_start = false;
        app.on_wakeup(0.0, &mut out);
        assert_eq!(out.len(), 40);
        let lost: Vec<u64> = (0..40).filter(|s| s % 4 == 1).collect();
        let mut acks = Vec::new();
        for e in out.drain(..) {
            if let Payload::Data { seq, ts } = e.payload {
                if !lost.contains(&seq) {
                    app.on_deliver(0.05, Side::B, Payload::Data { seq, ts }, &mut acks);
                }
            }
        }
        let mut resent = Vec::new();
        for e in acks.drain(..) {
            app.on_deliver(0.1, Side::A, e.payload, &mut resent);
        }
        while let Some(t) = app.next_wakeup().filter(|&t| t < 0.2) {
            app.on_wakeup(t, &mut resent);
        }
        let retx: Vec<u64> = resent
            .iter()
            .filter_map(|e| match e.payload {
                Payload::Data { seq, .. } if seq < 40 => Some(seq),
                _ => None,
            })
            .collect();
        assert_eq!(app.loss_events(), (1, 0));
        assert_eq!(retx, lost[..retx.len()].to_vec());
        assert!(retx.len() >= 9, "{retx:?}");
    }

    #[test]
    fn paced_departures_are_spaced_by_srtt_over_window() {
        let mut app = SpeedtestApp::new(0, 1, 0.0, 10.0);
        app.cc.rtt_estimate_s = 0.1;
        app.cc.in_slow_start = false;
        let mut out = Vec::new();
        app.on_wakeup(0.0, &mut out);
        assert_eq!(out.len(), 1);
        let gap = 0.1 / (PACING_RATIO_CA * INITIAL_CWND);
        let t = app.next_wakeup().unwrap();
        assert!((t - gap).abs() < 1e-12);
        app.on_wakeup(t, &mut out);
        assert_eq!(out.len(), 2);
    }
}
