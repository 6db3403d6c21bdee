use std::collections::BTreeMap;
use std::io::{Read, Write};

use super::{ForwardingState, NodeId, TopologyError};

const HEADER: [&str; 4] = ["epoch_ms", "node", "destination", "next_hop_node"];

/// One changed table entry; `next_hop == None` records a removal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiffEntry {
    pub epoch_ms: u64,
    pub node: NodeId,
    pub destination: NodeId,
    pub next_hop: Option<NodeId>,
}

fn epoch_ms(epoch_s: f64) -> u64 {
    (epoch_s * 1000.0).round() as u64
}

/// Changed entries between consecutive states; the first state is emitted in full.
pub fn diff_entries(states: &[ForwardingState]) -> Vec<DiffEntry> {
    let mut out = Vec::new();
    let mut prev: BTreeMap<(NodeId, NodeId), NodeId> = BTreeMap::new();
    for fs in states {
        let ms = epoch_ms(fs.epoch_s);
        let cur: BTreeMap<(NodeId, NodeId), NodeId> =
            fs.entries().map(|(n, d, h)| ((n, d), h)).collect();
        let mut keys: Vec<&(NodeId, NodeId)> = cur.keys().chain(prev.keys()).collect();
        keys.sort();
        keys.dedup();
        for &(node, destination) in keys {
            let before = prev.get(&(node, destination));
            let after = cur.get(&(node, destination));
            if before != after {
                out.push(DiffEntry {
                    epoch_ms: ms,
                    node,
                    destination,
                    next_hop: after.copied(),
                });
            }
        }
        prev = cur;
    }
    out
}

pub fn write_forwarding_diff<W: Write>(
    states: &[ForwardingState],
    sink: W,
) -> Result<usize, TopologyError> {
    let entries = diff_entries(states);
    let mut w = csv::WriterBuilder::new().from_writer(sink);
    let io = |e: csv::Error| TopologyError::Format(e.to_string());
    w.write_record(HEADER).map_err(io)?;
    for e in &entries {
        let hop = e.next_hop.map(|h| h.to_string()).unwrap_or_default();
        w.write_record([
            e.epoch_ms.to_string(),
            e.node.to_string(),
            e.destination.to_string(),
            hop,
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| TopologyError::Format(e.to_string()))?;
    Ok(entries.len())
}

pub fn read_forwarding_diff<R: Read>(source: R) -> Result<Vec<DiffEntry>, TopologyError> {
    let mut r = csv::ReaderBuilder::new().from_reader(source);
    let header = r
        .headers()
        .map_err(|e| TopologyError::Format(e.to_string()))?
        .clone();
    if header.iter().ne(HEADER) {
        return Err(TopologyError::Format("missing or wrong header".into()));
    }
    let mut out = Vec::new();
    for (i, row) in r.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| TopologyError::Format(format!("line {line}: {e}")))?;
        let bad = |what: &str| TopologyError::Format(format!("line {line}: bad {what}"));
        let epoch_ms = row[0].parse().map_err(|_| bad("epoch_ms"))?;
        let node = row[1].parse().map_err(|_| bad("node"))?;
        let destination = row[2].parse().map_err(|_| bad("destination"))?;
        let next_hop = match &row[3] {
            "" => None,
            s => Some(s.parse().map_err(|_| bad("next_hop_node"))?),
        };
        out.push(DiffEntry {
            epoch_ms,
            node,
            destination,
            next_hop,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{ConstellationSpec, GroundStation};
    use crate::topology::forwarding_timeline;

    #[test]
    fn diff_round_trip_reconstructs_tables() {
        let spec = ConstellationSpec {
            num_orbits: 4,
            sats_per_orbit: 4,
            ..ConstellationSpec::kuiper()
        };
        let gs = vec![GroundStation::new(0, "a", 10.0, 10.0), GroundStation::new(1, "b", -20.0, 70.0)];
        let states = forwarding_timeline(&spec, &gs, 30.0, 300.0).unwrap();
        let mut buf = Vec::new();
        let n = write_forwarding_diff(&states, &mut buf).unwrap();
        let entries = read_forwarding_diff(buf.as_slice()).unwrap();
        assert_eq!(entries.len(), n);
        assert_eq!(entries, diff_entries(&states));

        let mut table: BTreeMap<(NodeId, NodeId), NodeId> = BTreeMap::new();
        for fs in &states {
            for e in entries.iter().filter(|e| e.epoch_ms == epoch_ms(fs.epoch_s)) {
                match e.next_hop {
                    Some(h) => table.insert((e.node, e.destination), h),
                    None => table.remove(&(e.node, e.destination)),
                };
            }
            let expect: BTreeMap<_, _> = fs.entries().map(|(a, b, c)| ((a, b), c)).collect();
            assert_eq!(table, expect);
        }

        let mut again = Vec::new();
        write_forwarding_diff(&states, &mut again).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn rejects_bad_header() {
        assert!(read_forwarding_diff("a,b,c,d\n".as_bytes()).is_err());
        assert!(read_forwarding_diff("".as_bytes()).is_err());
    }
}
