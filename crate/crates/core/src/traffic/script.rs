use super::{App, Emit, Payload, Side};
use crate::netsim::PacketClass;

/// Sends a fixed list of `(time, size)` packets from A to B.
#[derive(Debug, Clone)]
pub struct ScriptApp {
    a: u32,
    b: u32,
    class: PacketClass,
    sends: Vec<(f64, u32)>,
    next: usize,
    received: Vec<(u32, f64)>,
}

impl ScriptApp {
    /// `sends` must be sorted by time.
    pub fn new(a: u32, b: u32, class: PacketClass, sends: Vec<(f64, u32)>) -> Self {
        assert!(
            sends.windows(2).all(|w| w[0].0 <= w[1].0),
            "script send times must be sorted"
        );
        Self {
            a,
            b,
            class,
            sends,
            next: 0,
            received: Vec::new(),
        }
    }

    /// `(index into sends, arrival time at B)` in arrival order.
    pub fn received(&self) -> &[(u32, f64)] {
        &self.received
    }
}

impl App for ScriptApp {
    fn endpoints(&self) -> (u32, u32) {
        (self.a, self.b)
    }

    fn next_wakeup(&self) -> Option<f64> {
        self.sends.get(self.next).map(|s| s.0)
    }

    fn on_wakeup(&mut self, now: f64, out: &mut Vec<Emit>) {
        while let Some(&(t, size)) = self.sends.get(self.next) {
            if t > now {
                break;
            }
            out.push(Emit {
                from: Side::A,
                size_bytes: size,
                class: self.class,
                payload: Payload::Data {
                    seq: self.next as u64,
                    ts: t,
                },
            });
            self.next += 1;
        }
    }

    fn on_deliver(&mut self, now: f64, at: Side, payload: Payload, _out: &mut Vec<Emit>) {
        if let (Side::B, Payload::Data { seq, .. }) = (at, payload) {
            self.received.push((seq as u32, now));
        }
    }
}
