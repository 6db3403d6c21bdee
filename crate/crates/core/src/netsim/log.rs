use std::io::Write;

use super::{DropReason, NetsimError, PacketClass};
use crate::topology::NodeId;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Outcome {
    Delivered(f64),
    Dropped(DropReason),
    InFlight,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogEntry {
    pub packet_id: u64,
    pub class: PacketClass,
    pub src: NodeId,
    pub dst: NodeId,
    pub created_s: f64,
    pub outcome: Outcome,
    /// Route of the nodes traversed so far, including the drop point.
    pub route_id: Option<u64>,
}

/// Fate of every real packet, indexed by packet id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DeliveryLog {
    pub entries: Vec<LogEntry>,
}

impl DeliveryLog {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn delivered(&self) -> usize {
        self.count(|o| matches!(o, Outcome::Delivered(_)))
    }

    pub fn dropped(&self, reason: DropReason) -> usize {
        self.count(|o| *o == Outcome::Dropped(reason))
    }

    pub fn in_flight(&self) -> usize {
        self.count(|o| *o == Outcome::InFlight)
    }

    fn count(&self, f: impl Fn(&Outcome) -> bool) -> usize {
        self.entries.iter().filter(|e| f(&e.outcome)).count()
    }

    pub fn write_csv<W: Write>(&self, sink: W) -> Result<(), NetsimError> {
        let io = |e: csv::Error| NetsimError::Io(e.to_string());
        let mut w = csv::Writer::from_writer(sink);
        w.write_record([
            "packet_id",
            "class",
            "src",
            "dst",
            "created_ms",
            "delivered_ms",
            "drop_reason",
            "route_id",
        ])
        .map_err(io)?;
        for e in &self.entries {
            let (delivered, reason) = match e.outcome {
                Outcome::Delivered(t) => (format!("{:.6}", t * 1000.0), String::new()),
                Outcome::Dropped(r) => (String::new(), r.to_string()),
                Outcome::InFlight => (String::new(), "in_flight".to_string()),
            };
            w.write_record([
                e.packet_id.to_string(),
                e.class.to_string(),
                e.src.to_string(),
                e.dst.to_string(),
                format!("{:.6}", e.created_s * 1000.0),
                delivered,
                reason,
                e.route_id.map(|r| format!("{r:016x}")).unwrap_or_default(),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| NetsimError::Io(e.to_string()))
    }

    pub fn to_csv_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        buf
    }
}
