use super::{App, Emit, FlowSpec, Payload, Side};
use crate::netsim::{PacketClass, PACKET_SIZE_BYTES};

/// Send times of a constant-bit-rate flow; at least one packet at start.
pub fn cbr_schedule(flow: &FlowSpec) -> Vec<f64> {
    let (ipd, count) = cbr_params(flow);
    (0..count).map(|k| flow.start_s + k as f64 * ipd).collect()
}

fn cbr_params(flow: &FlowSpec) -> (f64, u64) {
    let ipd = PACKET_SIZE_BYTES as f64 * 8.0 / flow.rate_bps;
    let count = ((flow.duration_s / ipd) - 1e-9).ceil().max(1.0) as u64;
    (ipd, count)
}

/// Open-loop UDP-like sender from the flow's source to its destination.
#[derive(Debug, Clone)]
pub struct CbrApp {
    pub flow: FlowSpec,
    ipd: f64,
    count: u64,
    sent: u64,
    delivered: u64,
}

impl CbrApp {
    pub fn new(flow: FlowSpec) -> Self {
        let (ipd, count) = cbr_params(&flow);
        Self {
            flow,
            ipd,
            count,
            sent: 0,
            delivered: 0,
        }
    }

    pub fn sent(&self) -> u64 {
        self.sent
    }

    pub fn delivered(&self) -> u64 {
        self.delivered
    }

    pub fn planned(&self) -> u64 {
        self.count
    }

    fn send_time(&self, k: u64) -> f64 {
        self.flow.start_s + k as f64 * self.ipd
    }
}

impl App for CbrApp {
    fn endpoints(&self) -> (u32, u32) {
        (self.flow.src_gs.index, self.flow.dst_gs.index)
    }

    fn next_wakeup(&self) -> Option<f64> {
        (self.sent < self.count).then(|| self.send_time(self.sent))
    }

    fn on_wakeup(&mut self, now: f64, out: &mut Vec<Emit>) {
        while self.sent < self.count && self.send_time(self.sent) <= now {
            out.push(Emit {
                from: Side::A,
                size_bytes: PACKET_SIZE_BYTES,
                class: PacketClass::Background,
                payload: Payload::Cbr,
            });
            self.sent += 1;
        }
    }

    fn on_deliver(&mut self, _now: f64, _at: Side, _payload: Payload, _out: &mut Vec<Emit>) {
        self.delivered += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::NodeId;

    fn flow(rate: f64, dur: f64) -> FlowSpec {
        FlowSpec {
            id: 0,
            src_gs: NodeId::gs(0),
            dst_gs: NodeId::gs(1),
            rate_bps: rate,
            start_s: 2.0,
            duration_s: dur,
        }
    }

    #[test]
    fn schedule_shape() {
        let s = cbr_schedule(&flow(1.2e6, 10.0));
        assert_eq!(s.len(), 1000);
        assert!((s[1] - s[0] - 0.010).abs() < 1e-12);
        assert_eq!(s[0], 2.0);
        assert!(*s.last().unwrap() < 12.0);

        let tiny = cbr_schedule(&flow(100.0, 1.0));
        assert_eq!(tiny, vec![2.0]);
    }

    #[test]
    fn long_run_rate_within_a_quantum() {
        for rate in [0.1e6, 0.77e6, 1.3e6, 2.0e6] {
            let f = flow(rate, 30.0);
            let n = cbr_schedule(&f).len() as f64;
            let sent_rate = n * 12000.0 / f.duration_s;
            assert!((sent_rate - rate).abs() <= 12000.0 / f.duration_s, "{rate}");
        }
    }

    #[test]
    fn app_emits_per_schedule() {
        let mut app = CbrApp::new(flow(1.2e6, 0.05));
        let mut out = Vec::new();
        let mut times = Vec::new();
        while let Some(t) = app.next_wakeup() {
            app.on_wakeup(t, &mut out);
            times.push(t);
        }
        assert_eq!(out.len(), 5);
        assert_eq!(times, cbr_schedule(&app.flow));
    }
}
