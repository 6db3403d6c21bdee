//! Workloads and endpoint applications. Apps are clock-free state machines
//! driven by whichever transport owns them: the simulator or a replay channel pair.

mod cbr;
mod flows;
mod ping;
mod script;
mod tcp;

pub use cbr::{cbr_schedule, CbrApp};
pub use flows::{generate_background_flows, read_flows, write_flows, FlowParams, FlowSpec};
pub use ping::{PingApp, PingResult, PING_HEADER_BYTES, PING_TIMEOUT_S};
pub use script::ScriptApp;
pub use tcp::{
    cubic_window, tcp_model_step, CcEvent, CcState, SpeedtestApp, ACK_SIZE_BYTES, CUBIC_BETA,
    CUBIC_C, MAX_SACK_BLOCKS, MSS_BYTES, RTO_S, SackBlocks, ABC_LIMIT,
};

use thiserror::Error;

use crate::netsim::PacketClass;

#[derive(Debug, Error)]
pub enum TrafficError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("flow file line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("flow file: {0}")]
    Io(String),
}

/// Endpoint of a two-party app: `A` initiates, `B` responds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    A,
    B,
}

impl Side {
    pub fn other(&self) -> Side {
        match self {
            Side::A => Side::B,
            Side::B => Side::A,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Payload {
    Cbr,
    PingRequest { seq: u32 },
    PingReply { seq: u32 },
    Data { seq: u64, ts: f64 },
    Ack { ack: u64, ts: f64, sack: SackBlocks },
}

/// A packet an app wants sent from one of its sides.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Emit {
    pub from: Side,
    pub size_bytes: u32,
    pub class: PacketClass,
    pub payload: Payload,
}

pub trait App {
    /// Station indices of sides A and B.
    fn endpoints(&self) -> (u32, u32);
    /// Next self-timed action, never earlier than the last call's `now`.
    fn next_wakeup(&self) -> Option<f64>;
    fn on_wakeup(&mut self, now: f64, out: &mut Vec<Emit>);
    fn on_deliver(&mut self, now: f64, at: Side, payload: Payload, out: &mut Vec<Emit>);
}

#[derive(Debug, Clone)]
pub enum AppInstance {
    Cbr(CbrApp),
    Ping(PingApp),
    Speedtest(Box<SpeedtestApp>),
    Script(ScriptApp),
}

impl AppInstance {
    pub fn as_ping(&self) -> Option<&PingApp> {
        match self {
            AppInstance::Ping(p) => Some(p),
            _ => None,
        }
    }

    pub fn as_speedtest(&self) -> Option<&SpeedtestApp> {
        match self {
            AppInstance::Speedtest(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_script(&self) -> Option<&ScriptApp> {
        match self {
            AppInstance::Script(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_cbr(&self) -> Option<&CbrApp> {
        match self {
            AppInstance::Cbr(c) => Some(c),
            _ => None,
        }
    }

    fn inner(&self) -> &dyn App {
        match self {
            AppInstance::Cbr(a) => a,
            AppInstance::Ping(a) => a,
            AppInstance::Speedtest(a) => a.as_ref(),
            AppInstance::Script(a) => a,
        }
    }

    fn inner_mut(&mut self) -> &mut dyn App {
        match self {
            AppInstance::Cbr(a) => a,
            AppInstance::Ping(a) => a,
            AppInstance::Speedtest(a) => a.as_mut(),
            AppInstance::Script(a) => a,
        }
    }
}

impl App for AppInstance {
    fn endpoints(&self) -> (u32, u32) {
        self.inner().endpoints()
    }

    fn next_wakeup(&self) -> Option<f64> {
        self.inner().next_wakeup()
    }

    fn on_wakeup(&mut self, now: f64, out: &mut Vec<Emit>) {
        self.inner_mut().on_wakeup(now, out)
    }

    fn on_deliver(&mut self, now: f64, at: Side, payload: Payload, out: &mut Vec<Emit>) {
        self.inner_mut().on_deliver(now, at, payload, out)
    }
}

impl From<CbrApp> for AppInstance {
    fn from(a: CbrApp) -> Self {
        AppInstance::Cbr(a)
    }
}

impl From<PingApp> for AppInstance {
    fn from(a: PingApp) -> Self {
        AppInstance::Ping(a)
    }
}

impl From<SpeedtestApp> for AppInstance {
    fn from(a: SpeedtestApp) -> Self {
        AppInstance::Speedtest(Box::new(a))
    }
}

impl From<ScriptApp> for AppInstance {
    fn from(a: ScriptApp) -> Self {
        AppInstance::Script(a)
    }
}
