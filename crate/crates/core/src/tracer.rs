//! Virtual trace packets between one station pair and their aggregation
//! into fixed-resolution records.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netsim::PACKET_SIZE_BYTES;

#[derive(Debug, Error, PartialEq)]
pub enum TracerError {
    #[error("cannot aggregate an empty group")]
    EmptyGroup,
    #[error("configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracerConfig {
    pub gs_a: u32,
    pub gs_b: u32,
    pub interval_s: f64,
    /// Samples averaged into one record.
    pub group_n: usize,
}

impl TracerConfig {
    pub fn new(gs_a: u32, gs_b: u32) -> Self {
        Self {
            gs_a,
            gs_b,
            interval_s: 0.002,
            group_n: 5,
        }
    }

    pub fn validate(&self) -> Result<(), TracerError> {
        if !(self.interval_s > 0.0) {
            return Err(TracerError::Config("interval_s must be positive".into()));
        }
        if self.group_n == 0 {
            return Err(TracerError::Config("group_n must be at least 1".into()));
        }
        if self.gs_a == self.gs_b {
            return Err(TracerError::Config("trace endpoints must differ".into()));
        }
        Ok(())
    }

    pub fn resolution_ms(&self) -> u64 {
        (self.interval_s * self.group_n as f64 * 1000.0).round() as u64
    }

    /// Emission count over a run of `duration_s`.
    pub fn sample_count(&self, duration_s: f64) -> usize {
        let mut k = (duration_s / self.interval_s).ceil() as usize;
        while k > 0 && (k - 1) as f64 * self.interval_s >= duration_s {
            k -= 1;
        }
        k
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    pub send_s: f64,
    pub delivered: bool,
    pub delay_s: f64,
    pub min_avail_bps: f64,
    pub bottleneck_queue_avail_pkts: i64,
    pub path_bdp_pkts: i64,
    pub route_id: Option<u64>,
}

impl TraceSample {
    pub fn dropped(send_s: f64) -> Self {
        Self {
            send_s,
            delivered: false,
            delay_s: 0.0,
            min_avail_bps: 0.0,
            bottleneck_queue_avail_pkts: 0,
            path_bdp_pkts: 0,
            route_id: None,
        }
    }

    pub fn delivered(send_s: f64, delay_s: f64, min_avail_bps: f64, queue_avail: i64, route_id: u64) -> Self {
        Self {
            send_s,
            delivered: true,
            delay_s,
            min_avail_bps,
            bottleneck_queue_avail_pkts: queue_avail,
            path_bdp_pkts: path_bdp_pkts(min_avail_bps, delay_s),
            route_id: Some(route_id),
        }
    }
}

pub fn path_bdp_pkts(min_avail_bps: f64, delay_s: f64) -> i64 {
    (min_avail_bps * delay_s / (PACKET_SIZE_BYTES as f64 * 8.0)).floor() as i64
}

/// Forward (A to B) and return (B to A) sample streams of one run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TraceSamples {
    pub forward: Vec<TraceSample>,
    pub ret: Vec<TraceSample>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t_ms: u64,
    pub delay_us: i64,
    pub rate_bps: i64,
    pub queue_capacity_pkts: i64,
    pub loss_ratio: f64,
    pub route_id: u64,
    pub bdp_pkts: Option<i64>,
}

impl TraceRecord {
    pub fn is_sentinel(&self) -> bool {
        self.delay_us == -1 && self.rate_bps == -1 && self.queue_capacity_pkts == -1
    }
}

fn round_half_up(x: f64) -> i64 {
    (x + 0.5).floor() as i64
}

/// One record from a group of consecutive samples. `prev_route` is kept
/// when every sample was lost.
pub fn aggregate(samples: &[TraceSample], prev_route: u64) -> Result<TraceRecord, TracerError> {
    let first = samples.first().ok_or(TracerError::EmptyGroup)?;
    let t_ms = (first.send_s * 1000.0).round() as u64;
    let n = samples.len() as f64;
    let got: Vec<&TraceSample> = samples.iter().filter(|s| s.delivered).collect();
    let loss_ratio = (samples.len() - got.len()) as f64 / n;
    if got.is_empty() {
        return Ok(TraceRecord {
            t_ms,
            delay_us: -1,
            rate_bps: -1,
            queue_capacity_pkts: -1,
            loss_ratio: 1.0,
            route_id: prev_route,
            bdp_pkts: Some(-1),
        });
    }
    let k = got.len() as f64;
    let mean = |f: &dyn Fn(&TraceSample) -> f64| got.iter().map(|s| f(s)).sum::<f64>() / k;
    Ok(TraceRecord {
        t_ms,
        delay_us: round_half_up(mean(&|s| s.delay_s * 1e6)),
        rate_bps: round_half_up(mean(&|s| s.min_avail_bps)),
        queue_capacity_pkts: round_half_up(mean(&|s| s.bottleneck_queue_avail_pkts as f64)),
        loss_ratio,
        route_id: got.last().and_then(|s| s.route_id).unwrap_or(prev_route),
        bdp_pkts: Some(round_half_up(mean(&|s| s.path_bdp_pkts as f64))),
    })
}

/// Records for consecutive groups of `n`; a trailing partial group is dropped.
pub fn aggregate_stream(samples: &[TraceSample], n: usize) -> Result<Vec<TraceRecord>, TracerError> {
    if n == 0 {
        return Err(TracerError::EmptyGroup);
    }
    let mut prev = 0;
    let mut out = Vec::with_capacity(samples.len() / n);
    for group in samples.chunks_exact(n) {
        let r = aggregate(group, prev)?;
        prev = r.route_id;
        out.push(r);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ok(t: f64, delay: f64, avail: f64, q: i64, route: u64) -> TraceSample {
        TraceSample::delivered(t, delay, avail, q, route)
    }

    #[test]
    fn uniform_group() {
        let g: Vec<_> = (0..5).map(|i| ok(i as f64 * 0.002, 0.010, 20e6, 100, 7)).collect();
        let r = aggregate(&g, 0).unwrap();
        assert_eq!(r.delay_us, 10_000);
        assert_eq!(r.loss_ratio, 0.0);
        assert_eq!(r.rate_bps, 20_000_000);
        assert_eq!(r.queue_capacity_pkts, 100);
        assert_eq!(r.route_id, 7);
        assert_eq!(r.t_ms, 0);
        assert_eq!(r.bdp_pkts, Some(16));
    }

    #[test]
    fn partial_and_total_loss() {
        let mut g: Vec<_> = (0..5).map(|i| ok(1.0 + i as f64 * 0.002, 0.02, 1e6, 5, i)).collect();
        g[1] = TraceSample::dropped(1.002);
        g[4] = TraceSample::dropped(1.008);
        let r = aggregate(&g, 99).unwrap();
        assert!((r.loss_ratio - 0.4).abs() < 1e-15);
        assert_eq!(r.route_id, 3);
        assert_eq!(r.t_ms, 1000);

        let all: Vec<_> = (0..5).map(|i| TraceSample::dropped(i as f64)).collect();
        let r = aggregate(&all, 42).unwrap();
        assert_eq!((r.delay_us, r.rate_bps, r.queue_capacity_pkts), (-1, -1, -1));
        assert_eq!(r.loss_ratio, 1.0);
        assert_eq!(r.route_id, 42);
        assert!(r.is_sentinel());
        assert_eq!(aggregate(&[], 0), Err(TracerError::EmptyGroup));
    }

    #[test]
    fn means_round_half_up() {
        let g = [ok(0.0, 0.000_010, 1.0, 1, 1), ok(0.002, 0.000_011, 2.0, 2, 1)];
        let r = aggregate(&g, 0).unwrap();
        assert_eq!(r.delay_us, 11);
        assert_eq!(r.rate_bps, 2);
        assert_eq!(r.queue_capacity_pkts, 2);
    }

    #[test]
    fn stream_cadence_and_route_carry() {
        let mut s: Vec<_> = (0..20).map(|i| ok(i as f64 * 0.002, 0.01, 1e6, 3, 5)).collect();
        for x in &mut s[5..10] {
            *x = TraceSample::dropped(x.send_s);
        }
        let recs = aggregate_stream(&s, 5).unwrap();
        assert_eq!(recs.len(), 4);
        assert!(recs.windows(2).all(|w| w[1].t_ms - w[0].t_ms == 10));
        assert_eq!(recs[1].route_id, 5);
        assert_eq!(recs[1].loss_ratio, 1.0);
    }

    #[test]
    fn sample_counts() {
        let c = TracerConfig::new(0, 1);
        assert_eq!(c.sample_count(200.0), 100_000);
        assert_eq!(c.resolution_ms(), 10);
        assert_eq!(c.sample_count(0.001), 1);
    }
}
