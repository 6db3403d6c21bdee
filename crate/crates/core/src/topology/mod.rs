//! Time-varying constellation graph: +grid inter-satellite links,
//! visibility-gated ground links and per-epoch forwarding states.

mod apsp;
mod export;

pub use apsp::{floyd_warshall, AllPairs};
pub use export::{read_forwarding_diff, write_forwarding_diff, DiffEntry};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{
    elevation_deg, ground_station_position, satellite_position_unchecked, ConstellationSpec,
    GroundStation, Position3,
};

#[derive(Debug, Error, PartialEq)]
pub enum TopologyError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("no route from {src} to {dst}")]
    Unreachable { src: NodeId, dst: NodeId },
    #[error("forwarding loop from {src} to {dst} after {hops} hops")]
    ForwardingLoop { src: NodeId, dst: NodeId, hops: usize },
    #[error("route id of an empty node sequence")]
    EmptyRoute,
    #[error("paths have different endpoints")]
    EndpointMismatch,
    #[error("forwarding diff: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    Satellite,
    GroundStation,
}

/// Satellites are numbered orbit-major (`orbit * S + slot`), stations by
/// their position in the scenario's station list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId {
    pub kind: NodeKind,
    pub index: u32,
}

impl NodeId {
    pub const fn sat(index: u32) -> Self {
        Self {
            kind: NodeKind::Satellite,
            index,
        }
    }

    pub const fn gs(index: u32) -> Self {
        Self {
            kind: NodeKind::GroundStation,
            index,
        }
    }

    pub fn is_station(&self) -> bool {
        self.kind == NodeKind::GroundStation
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            NodeKind::Satellite => write!(f, "sat{}", self.index),
            NodeKind::GroundStation => write!(f, "gs{}", self.index),
        }
    }
}

impl FromStr for NodeId {
    type Err = TopologyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parse = |digits: &str| {
            digits
                .parse::<u32>()
                .map_err(|_| TopologyError::Format(format!("bad node id `{s}`")))
        };
        if let Some(rest) = s.strip_prefix("sat") {
            Ok(NodeId::sat(parse(rest)?))
        } else if let Some(rest) = s.strip_prefix("gs") {
            Ok(NodeId::gs(parse(rest)?))
        } else {
            Err(TopologyError::Format(format!("bad node id `{s}`")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LinkKind {
    Isl,
    Gsl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LinkId {
    pub from: NodeId,
    pub to: NodeId,
    pub kind: LinkKind,
}

impl LinkId {
    pub fn between(from: NodeId, to: NodeId) -> Self {
        let kind = if from.is_station() || to.is_station() {
            LinkKind::Gsl
        } else {
            LinkKind::Isl
        };
        Self { from, to, kind }
    }

    pub fn reversed(&self) -> Self {
        Self {
            from: self.to,
            to: self.from,
            kind: self.kind,
        }
    }
}

/// Dense numbering of the graph: satellites first, then stations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeIndexer {
    pub num_sats: usize,
    pub num_stations: usize,
}

impl NodeIndexer {
    pub fn len(&self) -> usize {
        self.num_sats + self.num_stations
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dense(&self, node: NodeId) -> usize {
        match node.kind {
            NodeKind::Satellite => node.index as usize,
            NodeKind::GroundStation => self.num_sats + node.index as usize,
        }
    }

    pub fn node(&self, dense: usize) -> NodeId {
        if dense < self.num_sats {
            NodeId::sat(dense as u32)
        } else {
            NodeId::gs((dense - self.num_sats) as u32)
        }
    }

    pub fn contains(&self, node: NodeId) -> bool {
        match node.kind {
            NodeKind::Satellite => (node.index as usize) < self.num_sats,
            NodeKind::GroundStation => (node.index as usize) < self.num_stations,
        }
    }
}

/// Geometry of one scenario: shell plus stations, able to place any node.
#[derive(Debug, Clone)]
pub struct Constellation {
    pub spec: ConstellationSpec,
    pub stations: Vec<GroundStation>,
}

impl Constellation {
    pub fn new(spec: ConstellationSpec, stations: Vec<GroundStation>) -> Self {
        Self { spec, stations }
    }

    pub fn indexer(&self) -> NodeIndexer {
        NodeIndexer {
            num_sats: self.spec.num_satellites(),
            num_stations: self.stations.len(),
        }
    }

    pub fn position(&self, node: NodeId, t: f64) -> Position3 {
        match node.kind {
            NodeKind::Satellite => {
                let s = self.spec.sats_per_orbit;
                let i = node.index as usize;
                satellite_position_unchecked(&self.spec, i / s, i % s, t)
            }
            NodeKind::GroundStation => {
                ground_station_position(&self.stations[node.index as usize], t)
            }
        }
    }
}

/// Undirected +grid: each satellite links to its in-plane successor and to
/// the same slot on the next plane.
pub fn build_isl_grid(spec: &ConstellationSpec) -> Result<Vec<LinkId>, TopologyError> {
    let (o, s) = (spec.num_orbits, spec.sats_per_orbit);
    if o < 3 || s < 3 {
        return Err(TopologyError::Config(format!(
            "+grid needs at least 3 orbits and 3 satellites per orbit, got {o}x{s}"
        )));
    }
    let id = |orbit: usize, slot: usize| NodeId::sat((orbit * s + slot) as u32);
    let mut links = Vec::with_capacity(2 * o * s);
    for orbit in 0..o {
        for slot in 0..s {
            let here = id(orbit, slot);
            links.push(LinkId::between(here, id(orbit, (slot + 1) % s)));
            links.push(LinkId::between(here, id((orbit + 1) % o, slot)));
        }
    }
    Ok(links)
}

/// Every (station, satellite) pair above the shell's elevation mask at `t`.
pub fn visible_gsls(spec: &ConstellationSpec, stations: &[GroundStation], t: f64) -> Vec<LinkId> {
    let sat_positions: Vec<Position3> = (0..spec.num_satellites())
        .map(|i| {
            satellite_position_unchecked(spec, i / spec.sats_per_orbit, i % spec.sats_per_orbit, t)
        })
        .collect();
    let mut links = Vec::new();
    for (g, gs) in stations.iter().enumerate() {
        let gp = ground_station_position(gs, t);
        for (i, sp) in sat_positions.iter().enumerate() {
            let visible = elevation_deg(&gp, sp)
                .map(|e| e >= spec.min_elevation_deg)
                .unwrap_or(false);
            if visible {
                links.push(LinkId::between(NodeId::gs(g as u32), NodeId::sat(i as u32)));
            }
        }
    }
    links
}

/// Next-hop tables for every (node, destination) pair at one routing epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardingState {
    pub epoch_s: f64,
    indexer: NodeIndexer,
    apsp: AllPairs,
}

impl ForwardingState {
    pub fn from_all_pairs(epoch_s: f64, indexer: NodeIndexer, apsp: AllPairs) -> Self {
        assert_eq!(apsp.len(), indexer.len());
        Self {
            epoch_s,
            indexer,
            apsp,
        }
    }

    pub fn indexer(&self) -> NodeIndexer {
        self.indexer
    }

    pub fn next_hop_node(&self, node: NodeId, dst: NodeId) -> Option<NodeId> {
        if node == dst {
            return None;
        }
        let i = self.indexer.dense(node);
        let j = self.indexer.dense(dst);
        self.apsp.next(i, j).map(|k| self.indexer.node(k))
    }

    pub fn next_hop(&self, node: NodeId, dst: NodeId) -> Option<LinkId> {
        self.next_hop_node(node, dst)
            .map(|next| LinkId::between(node, next))
    }

    /// Shortest-path length in meters, `None` when unreachable.
    pub fn distance(&self, src: NodeId, dst: NodeId) -> Option<f64> {
        self.apsp
            .distance(self.indexer.dense(src), self.indexer.dense(dst))
    }

    pub fn same_tables(&self, other: &ForwardingState) -> bool {
        self.indexer == other.indexer && self.apsp.next_table() == other.apsp.next_table()
    }

    /// Iterates `(node, destination, next_hop)` for all present entries.
    pub fn entries(&self) -> impl Iterator<Item = (NodeId, NodeId, NodeId)> + '_ {
        let n = self.indexer.len();
        (0..n).flat_map(move |i| {
            (0..n).filter_map(move |j| {
                self.apsp
                    .next(i, j)
                    .map(|k| (self.indexer.node(i), self.indexer.node(j), self.indexer.node(k)))
            })
        })
    }
}

/// Floyd-Warshall over the ISL grid plus visible GSLs at `t`, distance
/// weighted. Stations originate and terminate traffic but never relay it.
pub fn compute_forwarding_state(
    spec: &ConstellationSpec,
    stations: &[GroundStation],
    t: f64,
) -> Result<ForwardingState, TopologyError> {
    let isls = build_isl_grid(spec)?;
    Ok(forwarding_state_with_isls(spec, stations, &isls, t))
}

fn forwarding_state_with_isls(
    spec: &ConstellationSpec,
    stations: &[GroundStation],
    isls: &[LinkId],
    t: f64,
) -> ForwardingState {
    let world = Constellation::new(spec.clone(), stations.to_vec());
    let indexer = world.indexer();
    let positions: Vec<Position3> = (0..indexer.len())
        .map(|d| world.position(indexer.node(d), t))
        .collect();
    let weight = |l: &LinkId| {
        let (a, b) = (indexer.dense(l.from), indexer.dense(l.to));
        (a, b, positions[a].distance(&positions[b]))
    };
    let mut edges: Vec<(usize, usize, f64)> = isls.iter().map(weight).collect();
    edges.extend(visible_gsls(spec, stations, t).iter().map(weight));
    let transit: Vec<bool> = (0..indexer.len()).map(|d| d < indexer.num_sats).collect();
    let apsp = floyd_warshall(indexer.len(), &edges, &transit);
    ForwardingState::from_all_pairs(t, indexer, apsp)
}

/// Forwarding states at `0, interval, 2*interval, ...` strictly below
/// `duration_s`; always at least one state.
pub fn forwarding_timeline(
    spec: &ConstellationSpec,
    stations: &[GroundStation],
    interval_s: f64,
    duration_s: f64,
) -> Result<Vec<ForwardingState>, TopologyError> {
    if !(interval_s > 0.0) {
        return Err(TopologyError::Config("interval_s must be positive".into()));
    }
    let isls = build_isl_grid(spec)?;
    let count = epoch_count(interval_s, duration_s);
    let epochs: Vec<f64> = (0..count).map(|k| k as f64 * interval_s).collect();

    let workers = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(epochs.len())
        .max(1);
    let chunk = epochs.len().div_ceil(workers);
    let states = std::thread::scope(|scope| {
        let handles: Vec<_> = epochs
            .chunks(chunk)
            .map(|ts| {
                let isls = &isls;
                scope.spawn(move || {
                    ts.iter()
                        .map(|&t| forwarding_state_with_isls(spec, stations, isls, t))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("forwarding worker panicked"))
            .collect()
    });
    Ok(states)
}

pub(crate) fn epoch_count(interval_s: f64, duration_s: f64) -> usize {
    let mut count = (duration_s / interval_s).ceil().max(1.0) as usize;
    // Guard against k*interval rounding just below the duration.
    while count > 1 && (count - 1) as f64 * interval_s >= duration_s {
        count -= 1;
    }
    count
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathRecord {
    pub nodes: Vec<NodeId>,
    pub links: Vec<LinkId>,
    pub route_id: u64,
}

impl PathRecord {
    pub fn first_satellite(&self) -> Option<NodeId> {
        (self.nodes.len() >= 3).then(|| self.nodes[1])
    }

    pub fn last_satellite(&self) -> Option<NodeId> {
        (self.nodes.len() >= 3).then(|| self.nodes[self.nodes.len() - 2])
    }
}

pub fn path_between(
    fs: &ForwardingState,
    src: NodeId,
    dst: NodeId,
) -> Result<PathRecord, TopologyError> {
    let limit = fs.indexer().len();
    let mut nodes = vec![src];
    let mut links = Vec::new();
    let mut here = src;
    while here != dst {
        let link = fs
            .next_hop(here, dst)
            .ok_or(TopologyError::Unreachable { src, dst })?;
        links.push(link);
        nodes.push(link.to);
        here = link.to;
        if links.len() > limit {
            return Err(TopologyError::ForwardingLoop {
                src,
                dst,
                hops: links.len(),
            });
        }
    }
    let route_id = route_id(&nodes)?;
    Ok(PathRecord {
        nodes,
        links,
        route_id,
    })
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// Incremental FNV-1a over `(kind tag, little-endian u32 index)` pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RouteHasher {
    state: u64,
    len: usize,
}

impl Default for RouteHasher {
    fn default() -> Self {
        Self {
            state: FNV_OFFSET,
            len: 0,
        }
    }
}

impl RouteHasher {
    pub fn push(&mut self, node: NodeId) {
        let tag: u8 = match node.kind {
            NodeKind::Satellite => 0,
            NodeKind::GroundStation => 1,
        };
        self.feed(tag);
        for b in node.index.to_le_bytes() {
            self.feed(b);
        }
        self.len += 1;
    }

    fn feed(&mut self, byte: u8) {
        self.state ^= byte as u64;
        self.state = self.state.wrapping_mul(FNV_PRIME);
    }

    pub fn finish(&self) -> Option<u64> {
        (self.len > 0).then_some(self.state)
    }
}

pub fn route_id(nodes: &[NodeId]) -> Result<u64, TopologyError> {
    let mut h = RouteHasher::default();
    for &n in nodes {
        h.push(n);
    }
    h.finish().ok_or(TopologyError::EmptyRoute)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Handover {
    None,
    GslSrc,
    GslDst,
    Both,
}

pub fn detect_handover(prev: &PathRecord, next: &PathRecord) -> Result<Handover, TopologyError> {
    let ends = |p: &PathRecord| (p.nodes.first().copied(), p.nodes.last().copied());
    if ends(prev) != ends(next) {
        return Err(TopologyError::EndpointMismatch);
    }
    let changed = |a: Option<NodeId>, b: Option<NodeId>| matches!((a, b), (Some(x), Some(y)) if x != y);
    let src = changed(prev.first_satellite(), next.first_satellite());
    let dst = changed(prev.last_satellite(), next.last_satellite());
    Ok(match (src, dst) {
        (false, false) => Handover::None,
        (true, false) => Handover::GslSrc,
        (false, true) => Handover::GslDst,
        (true, true) => Handover::Both,
    })
}
