use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::TrafficError;
use crate::topology::NodeId;

const MAX_START_DRAWS: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct FlowSpec {
    pub id: u32,
    pub src_gs: NodeId,
    pub dst_gs: NodeId,
    pub rate_bps: f64,
    pub start_s: f64,
    pub duration_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowParams {
    pub num_flows: usize,
    pub rate_min_bps: f64,
    pub rate_max_bps: f64,
    pub duration_min_s: f64,
    pub duration_max_s: f64,
    pub peak_s: f64,
    pub sigma_s: f64,
    /// Length of the simulated run the flows must fit into.
    pub sim_duration_s: f64,
}

impl FlowParams {
    /// Default flow mix for a run of `sim_duration_s`, peaking mid-run.
    pub fn with_duration(sim_duration_s: f64) -> Self {
        Self {
            num_flows: 10_000,
            rate_min_bps: 0.1e6,
            rate_max_bps: 2.0e6,
            duration_min_s: 10.0,
            duration_max_s: 15.0,
            peak_s: sim_duration_s / 2.0,
            sigma_s: sim_duration_s / 6.0,
            sim_duration_s,
        }
    }

    pub fn validate(&self) -> Result<(), TrafficError> {
        let bad = |m: &str| Err(TrafficError::Config(m.to_string()));
        if self.num_flows == 0 {
            return bad("num_flows must be positive");
        }
        if !(self.rate_min_bps > 0.0 && self.rate_min_bps <= self.rate_max_bps) {
            return bad("rate range must be positive and ordered");
        }
        if !(self.duration_min_s > 0.0 && self.duration_min_s <= self.duration_max_s) {
            return bad("duration range must be positive and ordered");
        }
        if !(self.sigma_s > 0.0) || !self.peak_s.is_finite() {
            return bad("sigma_s must be positive and peak_s finite");
        }
        if self.sim_duration_s < self.duration_min_s {
            return bad("flows cannot fit: sim_duration_s below duration_min_s");
        }
        Ok(())
    }
}

fn quantize_ms(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

/// Seeded background flows, sorted by start and numbered in that order.
pub fn generate_background_flows(
    params: &FlowParams,
    num_stations: usize,
    seed: u64,
) -> Result<Vec<FlowSpec>, TrafficError> {
    params.validate()?;
    if num_stations < 2 {
        return Err(TrafficError::Config("need at least two stations".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(params.peak_s, params.sigma_s)
        .map_err(|e| TrafficError::Config(e.to_string()))?;
    let upper = params.sim_duration_s - params.duration_min_s;
    let mut flows = Vec::with_capacity(params.num_flows);
    for _ in 0..params.num_flows {
        let mut start = None;
        for _ in 0..MAX_START_DRAWS {
            let s = quantize_ms(normal.sample(&mut rng));
            if (0.0..=upper).contains(&s) {
                start = Some(s);
                break;
            }
        }
        let start_s = start.ok_or_else(|| {
            TrafficError::Config(format!(
                "start window [0, {upper}] is practically unreachable for Normal({}, {})",
                params.peak_s, params.sigma_s
            ))
        })?;
        let rate_bps = rng
            .random_range(params.rate_min_bps..=params.rate_max_bps)
            .round()
            .clamp(params.rate_min_bps, params.rate_max_bps);
        let duration_s = quantize_ms(rng.random_range(params.duration_min_s..=params.duration_max_s))
            .clamp(params.duration_min_s, params.duration_max_s);
        let src = rng.random_range(0..num_stations);
        let mut dst = rng.random_range(0..num_stations - 1);
        if dst >= src {
            dst += 1;
        }
        flows.push(FlowSpec {
            id: 0,
            src_gs: NodeId::gs(src as u32),
            dst_gs: NodeId::gs(dst as u32),
            rate_bps,
            start_s,
            duration_s,
        });
    }
    flows.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
    for (i, f) in flows.iter_mut().enumerate() {
        f.id = i as u32;
    }
    Ok(flows)
}

const HEADER: [&str; 6] = ["id", "src_gs", "dst_gs", "rate_bps", "start_ms", "duration_ms"];

/// Writes flows; station columns hold the station's row index.
pub fn write_flows<W: Write>(flows: &[FlowSpec], sink: W) -> Result<(), TrafficError> {
    let io = |e: csv::Error| TrafficError::Io(e.to_string());
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(HEADER).map_err(io)?;
    for f in flows {
        w.write_record([
            f.id.to_string(),
            f.src_gs.index.to_string(),
            f.dst_gs.index.to_string(),
            format!("{}", f.rate_bps.round() as u64),
            format!("{}", (f.start_s * 1000.0).round() as u64),
            format!("{}", (f.duration_s * 1000.0).round() as u64),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| TrafficError::Io(e.to_string()))
}

pub fn read_flows<R: Read>(source: R) -> Result<Vec<FlowSpec>, TrafficError> {
    let mut r = csv::Reader::from_reader(source);
    let header = r
        .headers()
        .map_err(|e| TrafficError::Parse {
            line: 1,
            msg: e.to_string(),
        })?
        .clone();
    if header.iter().ne(HEADER) {
        return Err(TrafficError::Parse {
            line: 1,
            msg: "missing or wrong header".into(),
        });
    }
    let mut out = Vec::new();
    for (i, row) in r.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| TrafficError::Parse {
            line,
            msg: e.to_string(),
        })?;
        let num = |k: usize| -> Result<u64, TrafficError> {
            row[k].parse().map_err(|_| TrafficError::Parse {
                line,
                msg: format!("bad {}", HEADER[k]),
            })
        };
        let f = FlowSpec {
            id: num(0)? as u32,
            src_gs: NodeId::gs(num(1)? as u32),
            dst_gs: NodeId::gs(num(2)? as u32),
            rate_bps: num(3)? as f64,
            start_s: num(4)? as f64 / 1000.0,
            duration_s: num(5)? as f64 / 1000.0,
        };
        if f.src_gs == f.dst_gs || f.rate_bps <= 0.0 || f.duration_s <= 0.0 {
            return Err(TrafficError::Parse {
                line,
                msg: "flow needs distinct endpoints and positive rate and duration".into(),
            });
        }
        out.push(f);
    }
    Ok(out)
}
