//! One drop-tail link driven by an explicit offered sequence.

use super::{run_on_network, Gates, Outcome, PacketClass, StaticNet};
use crate::traffic::ScriptApp;

/// Per offered `(arrival_s, size_bytes)` packet, its delivery time at the
/// far end or `None` if the queue dropped it. Arrivals must be sorted.
pub fn simulate_offered(
    rate_bps: f64,
    delay_s: f64,
    capacity: usize,
    offered: &[(f64, u32)],
) -> Vec<Option<f64>> {
    let net = StaticNet::symmetric(rate_bps, capacity, delay_s);
    let app = ScriptApp::new(0, 1, PacketClass::Probe, offered.to_vec());
    let horizon = offered.last().map_or(0.0, |o| o.0);
    let drain = offered
        .iter()
        .map(|o| o.1 as f64 * 8.0 / rate_bps)
        .sum::<f64>()
        + delay_s
        + 1.0;
    let out = run_on_network(&net, Gates::default(), horizon, drain, vec![app.into()], None)
        .expect("static two-station network accepts the script");
    out.log
        .entries
        .iter()
        .map(|e| match e.outcome {
            Outcome::Delivered(t) => Some(t),
            _ => None,
        })
        .collect()
}
