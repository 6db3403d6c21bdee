//! Deterministic packet-level discrete-event simulator.

mod engine;
mod interface;
mod log;
mod network;
pub mod single_link;

pub use engine::{run_on_network, run_simulation, Gates, SimOutput};
pub use interface::{serialization_time, Admission, Interface, UTILIZATION_WINDOW_S};
pub use log::{DeliveryLog, LogEntry, Outcome};
pub use network::{ConstellationNet, IfaceSpec, Network, StaticNet};

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{ConstellationSpec, GeomError, GroundStation};
use crate::topology::TopologyError;

/// Packet size on the wire for generated data traffic.
pub const PACKET_SIZE_BYTES: u32 = 1500;

#[derive(Debug, Error)]
pub enum NetsimError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("delivery log: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PacketClass {
    Background,
    Probe,
    Transport,
    TraceVirtual,
}

impl PacketClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            PacketClass::Background => "background",
            PacketClass::Probe => "probe",
            PacketClass::Transport => "transport",
            PacketClass::TraceVirtual => "trace_virtual",
        }
    }

    pub fn is_virtual(&self) -> bool {
        *self == PacketClass::TraceVirtual
    }
}

impl fmt::Display for PacketClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    Queue,
    Handover,
    NoRoute,
    Loss,
}

impl DropReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            DropReason::Queue => "queue",
            DropReason::Handover => "handover",
            DropReason::NoRoute => "no_route",
            DropReason::Loss => "loss",
        }
    }
}

impl fmt::Display for DropReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn default_drain() -> f64 {
    5.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub spec: ConstellationSpec,
    pub stations: Vec<GroundStation>,
    pub fs_interval_s: f64,
    pub duration_s: f64,
    pub handover_loss_s: f64,
    pub reconfig_interval_s: f64,
    pub reconfig_duration_s: f64,
    /// Station id to bandwidth reserved on its uplink for non-background traffic.
    #[serde(default)]
    pub gsl_reservation: BTreeMap<u32, f64>,
    pub seed: u64,
    /// Extra simulated time after `duration_s` for in-flight packets to settle.
    #[serde(default = "default_drain")]
    pub drain_s: f64,
}

impl SimConfig {
    pub fn new(spec: ConstellationSpec, stations: Vec<GroundStation>, duration_s: f64) -> Self {
        Self {
            spec,
            stations,
            fs_interval_s: 0.1,
            duration_s,
            handover_loss_s: 0.0,
            reconfig_interval_s: 0.0,
            reconfig_duration_s: 0.0,
            gsl_reservation: BTreeMap::new(),
            seed: 0,
            drain_s: default_drain(),
        }
    }

    pub fn validate(&self) -> Result<(), NetsimError> {
        self.spec.validate()?;
        let bad = |m: String| Err(NetsimError::Config(m));
        if !(self.duration_s > 0.0) {
            return bad("duration_s must be positive".into());
        }
        if !(self.fs_interval_s > 0.0) {
            return bad("fs_interval_s must be positive".into());
        }
        if !(self.handover_loss_s >= 0.0) {
            return bad("handover_loss_s must be non-negative".into());
        }
        if !(self.drain_s >= 0.0) {
            return bad("drain_s must be non-negative".into());
        }
        if self.reconfig_interval_s < 0.0 || self.reconfig_duration_s < 0.0 {
            return bad("reconfiguration times must be non-negative".into());
        }
        if self.reconfig_interval_s > 0.0 && self.reconfig_duration_s >= self.reconfig_interval_s {
            return bad("reconfig_duration_s must be below reconfig_interval_s".into());
        }
        let mut ids = std::collections::BTreeSet::new();
        for gs in &self.stations {
            gs.validate()?;
            if !ids.insert(gs.id) {
                return bad(format!("duplicate station id {}", gs.id));
            }
        }
        for (&id, &bps) in &self.gsl_reservation {
            if !ids.contains(&id) {
                return bad(format!("reservation for unknown station {id}"));
            }
            if !(0.0..=self.spec.gsl_rate_bps).contains(&bps) {
                return bad(format!("reservation {bps} for station {id} exceeds the GSL rate"));
            }
        }
        Ok(())
    }

    pub fn gates(&self) -> Gates {
        Gates {
            handover_loss_s: self.handover_loss_s,
            reconfig_interval_s: self.reconfig_interval_s,
            reconfig_duration_s: self.reconfig_duration_s,
        }
    }
}
