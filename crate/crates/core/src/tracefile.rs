//! Trace File CSV: `# key=value` metadata, a header row, one row per record.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tracer::TraceRecord;

pub const HEADER: &str = "t_ms,delay_us,rate_bps,queue_capacity_pkts,loss_ratio,route_id,bdp_pkts";
const HEADER_NO_BDP: &str = "t_ms,delay_us,rate_bps,queue_capacity_pkts,loss_ratio,route_id";

#[derive(Debug, Error, PartialEq)]
pub enum TraceFileError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid trace: {0}")]
    Validation(String),
    #[error("out of range: {0}")]
    Range(String),
    #[error("i/o: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Return,
}

impl Direction {
    pub fn as_str(&self) -> &'static str {
        match self {
            Direction::Forward => "forward",
            Direction::Return => "return",
        }
    }
}

impl FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "forward" => Ok(Direction::Forward),
            "return" => Ok(Direction::Return),
            _ => Err(format!("unknown direction `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceMeta {
    pub scenario: String,
    pub direction: Direction,
    pub resolution_ms: u64,
    pub seed: u64,
    /// Further `key=value` metadata, kept verbatim.
    pub extra: BTreeMap<String, String>,
}

impl TraceMeta {
    pub fn new(scenario: impl Into<String>, direction: Direction, resolution_ms: u64, seed: u64) -> Self {
        Self {
            scenario: scenario.into(),
            direction,
            resolution_ms,
            seed,
            extra: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceFile {
    pub meta: TraceMeta,
    pub records: Vec<TraceRecord>,
}

impl TraceFile {
    pub fn resolution_s(&self) -> f64 {
        self.meta.resolution_ms as f64 / 1000.0
    }

    pub fn validate(&self) -> Result<(), TraceFileError> {
        let bad = |m: String| Err(TraceFileError::Validation(m));
        if self.meta.resolution_ms == 0 {
            return bad("resolution_ms must be positive".into());
        }
        if self.meta.scenario.contains('\n') {
            return bad("scenario name contains a newline".into());
        }
        for (i, r) in self.records.iter().enumerate() {
            let expect = i as u64 * self.meta.resolution_ms;
            if r.t_ms != expect {
                return bad(format!("record {i}: t_ms {} but expected {expect}", r.t_ms));
            }
            check_record(r).map_err(TraceFileError::Validation)?;
        }
        Ok(())
    }

    /// Serializes to the canonical byte form.
    pub fn to_bytes(&self) -> Result<Vec<u8>, TraceFileError> {
        self.validate()?;
        let mut s = String::new();
        let _ = writeln!(s, "# scenario={}", self.meta.scenario);
        let _ = writeln!(s, "# direction={}", self.meta.direction.as_str());
        let _ = writeln!(s, "# resolution_ms={}", self.meta.resolution_ms);
        let _ = writeln!(s, "# seed={}", self.meta.seed);
        for (k, v) in &self.meta.extra {
            let _ = writeln!(s, "# {k}={v}");
        }
        s.push_str(HEADER);
        s.push('\n');
        for r in &self.records {
            let _ = write!(
                s,
                "{},{},{},{},{:.3},{:016x},",
                r.t_ms, r.delay_us, r.rate_bps, r.queue_capacity_pkts, r.loss_ratio, r.route_id
            );
            if let Some(b) = r.bdp_pkts {
                let _ = write!(s, "{b}");
            }
            s.push('\n');
        }
        Ok(s.into_bytes())
    }
}

fn check_record(r: &TraceRecord) -> Result<(), String> {
    for (name, v) in [
        ("delay_us", r.delay_us),
        ("rate_bps", r.rate_bps),
        ("queue_capacity_pkts", r.queue_capacity_pkts),
    ] {
        if v < -1 {
            return Err(format!("t_ms {}: negative {name} {v}", r.t_ms));
        }
    }
    if let Some(b) = r.bdp_pkts {
        if b < -1 {
            return Err(format!("t_ms {}: negative bdp_pkts {b}", r.t_ms));
        }
    }
    if !(0.0..=1.0).contains(&r.loss_ratio) {
        return Err(format!("t_ms {}: loss_ratio {} outside [0, 1]", r.t_ms, r.loss_ratio));
    }
    Ok(())
}

/// Writes `tf`; returns the number of bytes written. Nothing is written if invalid.
pub fn write<W: Write>(tf: &TraceFile, mut sink: W) -> Result<usize, TraceFileError> {
    let bytes = tf.to_bytes()?;
    sink.write_all(&bytes)
        .map_err(|e| TraceFileError::Io(e.to_string()))?;
    Ok(bytes.len())
}

pub fn read<R: Read>(mut source: R) -> Result<TraceFile, TraceFileError> {
    let mut text = String::new();
    source
        .read_to_string(&mut text)
        .map_err(|e| TraceFileError::Io(e.to_string()))?;
    parse(&text)
}

pub fn parse(text: &str) -> Result<TraceFile, TraceFileError> {
    let mut meta: BTreeMap<String, String> = BTreeMap::new();
    let mut header: Option<bool> = None;
    let mut records = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let perr = |msg: String| TraceFileError::Parse { line, msg };
        let l = raw.strip_suffix('\r').unwrap_or(raw);
        if header.is_none() {
            if let Some(rest) = l.strip_prefix('#') {
                let (k, v) = rest
                    .trim_start()
                    .split_once('=')
                    .ok_or_else(|| perr("metadata must be `# key=value`".into()))?;
                meta.insert(k.trim().to_string(), v.to_string());
                continue;
            }
            header = Some(match l {
                HEADER => true,
                HEADER_NO_BDP => false,
                _ => return Err(perr(format!("expected header `{HEADER}`"))),
            });
            continue;
        }
        if l.is_empty() {
            continue;
        }
        let with_bdp = header == Some(true);
        let cols: Vec<&str> = l.split(',').collect();
        let want = if with_bdp { 7 } else { 6 };
        if cols.len() != want {
            return Err(perr(format!("expected {want} columns, found {}", cols.len())));
        }
        let int = |k: usize, name: &str| -> Result<i64, TraceFileError> {
            cols[k]
                .parse()
                .map_err(|_| perr(format!("bad {name} `{}`", cols[k])))
        };
        let t_ms = cols[0]
            .parse::<u64>()
            .map_err(|_| perr(format!("bad t_ms `{}`", cols[0])))?;
        let loss_ratio: f64 = cols[4]
            .parse()
            .map_err(|_| perr(format!("bad loss_ratio `{}`", cols[4])))?;
        let route_id = u64::from_str_radix(cols[5], 16)
            .map_err(|_| perr(format!("bad route_id `{}`", cols[5])))?;
        let bdp_pkts = if with_bdp && !cols[6].is_empty() {
            Some(int(6, "bdp_pkts")?)
        } else {
            None
        };
        let r = TraceRecord {
            t_ms,
            delay_us: int(1, "delay_us")?,
            rate_bps: int(2, "rate_bps")?,
            queue_capacity_pkts: int(3, "queue_capacity_pkts")?,
            loss_ratio,
            route_id,
            bdp_pkts,
        };
        check_record(&r).map_err(|m| TraceFileError::Validation(format!("line {line}: {m}")))?;
        records.push(r);
    }
    if header.is_none() {
        return Err(TraceFileError::Parse {
            line: text.lines().count() + 1,
            msg: "missing header".into(),
        });
    }
    let take = |m: &mut BTreeMap<String, String>, k: &str| m.remove(k);
    let direction = take(&mut meta, "direction")
        .ok_or_else(|| TraceFileError::Validation("missing direction metadata".into()))?
        .parse::<Direction>()
        .map_err(TraceFileError::Validation)?;
    let resolution_ms = take(&mut meta, "resolution_ms")
        .ok_or_else(|| TraceFileError::Validation("missing resolution_ms metadata".into()))?
        .parse::<u64>()
        .map_err(|e| TraceFileError::Validation(format!("resolution_ms: {e}")))?;
    let seed = match take(&mut meta, "seed") {
        Some(s) => s
            .parse::<u64>()
            .map_err(|e| TraceFileError::Validation(format!("seed: {e}")))?,
        None => 0,
    };
    let scenario = take(&mut meta, "scenario").unwrap_or_default();
    let tf = TraceFile {
        meta: TraceMeta {
            scenario,
            direction,
            resolution_ms,
            seed,
            extra: meta,
        },
        records,
    };
    tf.validate()?;
    Ok(tf)
}

/// Shifts every measured delay by `offset_us`; sentinel rows are untouched.
pub fn apply_delay_offset(tf: &TraceFile, offset_us: i64) -> Result<TraceFile, TraceFileError> {
    let mut out = tf.clone();
    for r in &mut out.records {
        if r.delay_us == -1 {
            continue;
        }
        let d = r.delay_us + offset_us;
        if d < 0 {
            return Err(TraceFileError::Range(format!(
                "t_ms {}: delay {} us with offset {offset_us} us is negative",
                r.t_ms, r.delay_us
            )));
        }
        r.delay_us = d;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(t_ms: u64, delay_us: i64) -> TraceRecord {
        TraceRecord {
            t_ms,
            delay_us,
            rate_bps: 50_000_000,
            queue_capacity_pkts: 200,
            loss_ratio: 0.0,
            route_id: 0xabc,
            bdp_pkts: Some(83),
        }
    }

    fn file(records: Vec<TraceRecord>) -> TraceFile {
        TraceFile {
            meta: TraceMeta::new("unit", Direction::Forward, 10, 7),
            records,
        }
    }

    #[test]
    fn two_records_layout() {
        let tf = file(vec![rec(0, 20_000), rec(10, 20_000)]);
        let mut buf = Vec::new();
        let n = write(&tf, &mut buf).unwrap();
        assert_eq!(n, buf.len());
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4 + 1 + 2);
        assert_eq!(lines[4], HEADER);
        assert_eq!(lines[5], "0,20000,50000000,200,0.000,0000000000000abc,83");
        assert!(text.ends_with('\n') && !text.contains('\r'));
        assert_eq!(read(text.as_bytes()).unwrap(), tf);
    }

    #[test]
    fn sentinel_literals() {
        let mut r = rec(0, -1);
        r.rate_bps = -1;
        r.queue_capacity_pkts = -1;
        r.loss_ratio = 1.0;
        r.bdp_pkts = None;
        let bytes = file(vec![r]).to_bytes().unwrap();
        let text = String::from_utf8(bytes).unwrap();
        assert!(text.contains("\n0,-1,-1,-1,1.000,0000000000000abc,\n"));
    }

    #[test]
    fn rejects_bad_inputs() {
        let good = String::from_utf8(file(vec![rec(0, 1), rec(10, 1)]).to_bytes().unwrap()).unwrap();
        let loss = good.replace("0,1,50000000,200,0.000", "0,1,50000000,200,1.500");
        assert!(matches!(parse(&loss), Err(TraceFileError::Validation(_))));
        let spacing = good.replace("\n10,", "\n20,");
        assert!(matches!(parse(&spacing), Err(TraceFileError::Validation(_))));
        let no_header = good.replace(HEADER, "");
        assert!(matches!(parse(&no_header), Err(TraceFileError::Parse { .. })));
        assert!(matches!(parse("# direction=forward\n"), Err(TraceFileError::Parse { .. })));
        let junk = good.replace("\n10,1,", "\n10,x,");
        assert_eq!(
            parse(&junk).unwrap_err(),
            TraceFileError::Parse {
                line: 7,
                msg: "bad delay_us `x`".into()
            }
        );
        let neg = good.replace("\n10,1,", "\n10,-5,");
        assert!(parse(&neg).is_err());
        let late = file(vec![rec(10, 1)]);
        assert!(late.to_bytes().is_err());
    }

    #[test]
    fn optional_bdp_column() {
        let text = "# direction=return\n# resolution_ms=10\nt_ms,delay_us,rate_bps,queue_capacity_pkts,loss_ratio,route_id\n0,5,6,7,0.200,ff\n";
        let tf = parse(text).unwrap();
        assert_eq!(tf.records[0].bdp_pkts, None);
        assert_eq!(tf.records[0].route_id, 255);
        assert_eq!(tf.meta.direction, Direction::Return);
    }

    #[test]
    fn delay_offsets() {
        let tf = file(vec![rec(0, 20_000), rec(10, 20_000), {
            let mut r = rec(20, -1);
            r.loss_ratio = 1.0;
            r
        }]);
        assert_eq!(apply_delay_offset(&tf, 0).unwrap(), tf);
        let shifted = apply_delay_offset(&tf, -500).unwrap();
        assert_eq!(shifted.records[0].delay_us, 19_500);
        assert_eq!(shifted.records[2].delay_us, -1);
        assert!(matches!(apply_delay_offset(&tf, -30_000), Err(TraceFileError::Range(_))));
    }
}
