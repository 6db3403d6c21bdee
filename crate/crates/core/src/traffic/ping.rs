use super::{App, Emit, Payload, Side};
use crate::netsim::PacketClass;

/// IPv4 + ICMP header bytes added to the ping payload on the wire.
pub const PING_HEADER_BYTES: u32 = 28;
pub const PING_TIMEOUT_S: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PingResult {
    pub seq: u32,
    pub send_s: f64,
    /// `None` when no reply arrived within the timeout.
    pub rtt_s: Option<f64>,
}

/// Echo requests from A every `interval_s` in `[start, start + duration)`; B replies at once.
#[derive(Debug, Clone)]
pub struct PingApp {
    a: u32,
    b: u32,
    start_s: f64,
    end_s: f64,
    interval_s: f64,
    size_bytes: u32,
    sent: Vec<f64>,
    replies: Vec<Option<f64>>,
}

impl PingApp {
    pub fn new(a: u32, b: u32, start_s: f64, duration_s: f64, interval_s: f64, payload_bytes: u32) -> Self {
        assert!(interval_s > 0.0, "ping interval must be positive");
        Self {
            a,
            b,
            start_s,
            end_s: start_s + duration_s,
            interval_s,
            size_bytes: payload_bytes + PING_HEADER_BYTES,
            sent: Vec::new(),
            replies: Vec::new(),
        }
    }

    pub fn wire_size(&self) -> u32 {
        self.size_bytes
    }

    fn send_time(&self, k: usize) -> f64 {
        self.start_s + k as f64 * self.interval_s
    }

    pub fn results(&self) -> Vec<PingResult> {
        self.sent
            .iter()
            .zip(&self.replies)
            .enumerate()
            .map(|(i, (&send_s, reply))| PingResult {
                seq: i as u32,
                send_s,
                rtt_s: reply
                    .map(|r| r - send_s)
                    .filter(|&rtt| rtt <= PING_TIMEOUT_S),
            })
            .collect()
    }
}

impl App for PingApp {
    fn endpoints(&self) -> (u32, u32) {
        (self.a, self.b)
    }

    fn next_wakeup(&self) -> Option<f64> {
        let t = self.send_time(self.sent.len());
        (t < self.end_s).then_some(t)
    }

    fn on_wakeup(&mut self, now: f64, out: &mut Vec<Emit>) {
        while self.send_time(self.sent.len()) <= now && self.send_time(self.sent.len()) < self.end_s {
            let seq = self.sent.len() as u32;
            self.sent.push(self.send_time(self.sent.len()));
            self.replies.push(None);
            out.push(Emit {
                from: Side::A,
                size_bytes: self.size_bytes,
                class: PacketClass::Probe,
                payload: Payload::PingRequest { seq },
            });
        }
    }

    fn on_deliver(&mut self, now: f64, at: Side, payload: Payload, out: &mut Vec<Emit>) {
        match (at, payload) {
            (Side::B, Payload::PingRequest { seq }) => out.push(Emit {
                from: Side::B,
                size_bytes: self.size_bytes,
                class: PacketClass::Probe,
                payload: Payload::PingReply { seq },
            }),
            (Side::A, Payload::PingReply { seq }) => {
                if let Some(slot) = self.replies.get_mut(seq as usize) {
                    slot.get_or_insert(now);
                }
            }
            _ => {}
        }
    }
}
