use crate::geom::{propagation_delay, SPEED_OF_LIGHT_M_S};
use crate::topology::{
    detect_handover, forwarding_timeline, path_between, Constellation, ForwardingState, Handover,
    NodeId, NodeIndexer,
};

use super::{NetsimError, SimConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IfaceSpec {
    pub rate_bps: f64,
    pub capacity: usize,
    pub reserved_bps: f64,
    pub gsl: bool,
}

/// Routing, propagation and port layout seen by the simulation engine.
pub trait Network {
    fn num_stations(&self) -> usize;
    fn interfaces(&self) -> Vec<IfaceSpec>;
    /// Start times of routing epochs; the first is 0.
    fn epoch_starts(&self) -> Vec<f64>;
    fn next_hop(&self, epoch: usize, node: NodeId, dst: NodeId) -> Option<NodeId>;
    fn interface(&self, node: NodeId, next: NodeId) -> usize;
    fn propagation(&self, from: NodeId, to: NodeId, t: f64) -> f64;
    /// Sorted handover instants of station `gs`.
    fn handovers(&self, gs: usize) -> &[f64];
}

/// The satellite shell with precomputed forwarding states.
pub struct ConstellationNet {
    world: Constellation,
    indexer: NodeIndexer,
    states: Vec<ForwardingState>,
    handovers: Vec<Vec<f64>>,
    ifaces: Vec<IfaceSpec>,
}

impl ConstellationNet {
    pub fn new(config: &SimConfig) -> Result<Self, NetsimError> {
        config.validate()?;
        let states = forwarding_timeline(
            &config.spec,
            &config.stations,
            config.fs_interval_s,
            config.duration_s,
        )?;
        Self::from_states(config, states)
    }

    pub fn from_states(config: &SimConfig, states: Vec<ForwardingState>) -> Result<Self, NetsimError> {
        let world = Constellation::new(config.spec.clone(), config.stations.clone());
        let indexer = world.indexer();
        let handovers = station_handovers(&states, indexer.num_stations)?;
        let n = indexer.num_sats;
        let spec = &config.spec;
        let mut ifaces = vec![
            IfaceSpec {
                rate_bps: spec.isl_rate_bps,
                capacity: spec.isl_queue_pkts,
                reserved_bps: 0.0,
                gsl: false,
            };
            4 * n
        ];
        for d in 0..indexer.len() {
            let reserved_bps = if d >= n {
                let id = config.stations[d - n].id;
                config.gsl_reservation.get(&id).copied().unwrap_or(0.0)
            } else {
                0.0
            };
            ifaces.push(IfaceSpec {
                rate_bps: spec.gsl_rate_bps,
                capacity: spec.gsl_queue_pkts,
                reserved_bps,
                gsl: true,
            });
        }
        Ok(Self {
            world,
            indexer,
            states,
            handovers,
            ifaces,
        })
    }

    pub fn states(&self) -> &[ForwardingState] {
        &self.states
    }

    pub fn constellation(&self) -> &Constellation {
        &self.world
    }
}

/// Per station, the epochs at which its serving satellite changed on the
/// path to or from any other station.
fn station_handovers(states: &[ForwardingState], g: usize) -> Result<Vec<Vec<f64>>, NetsimError> {
    let mut out = vec![Vec::new(); g];
    for w in states.windows(2) {
        let mut hit = vec![false; g];
        for a in 0..g as u32 {
            for b in 0..g as u32 {
                if a == b {
                    continue;
                }
                let (src, dst) = (NodeId::gs(a), NodeId::gs(b));
                let (Ok(p), Ok(q)) = (path_between(&w[0], src, dst), path_between(&w[1], src, dst))
                else {
                    continue;
                };
                match detect_handover(&p, &q)? {
                    Handover::None => {}
                    Handover::GslSrc => hit[a as usize] = true,
                    Handover::GslDst => hit[b as usize] = true,
                    Handover::Both => {
                        hit[a as usize] = true;
                        hit[b as usize] = true;
                    }
                }
            }
        }
        for (s, h) in hit.into_iter().enumerate() {
            if h {
                out[s].push(w[1].epoch_s);
            }
        }
    }
    Ok(out)
}

impl Network for ConstellationNet {
    fn num_stations(&self) -> usize {
        self.indexer.num_stations
    }

    fn interfaces(&self) -> Vec<IfaceSpec> {
        self.ifaces.clone()
    }

    fn epoch_starts(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.epoch_s).collect()
    }

    fn next_hop(&self, epoch: usize, node: NodeId, dst: NodeId) -> Option<NodeId> {
        self.states[epoch].next_hop_node(node, dst)
    }

    fn interface(&self, node: NodeId, next: NodeId) -> usize {
        let n = self.indexer.num_sats;
        if node.is_station() || next.is_station() {
            return 4 * n + self.indexer.dense(node);
        }
        let s = self.world.spec.sats_per_orbit;
        let o = self.world.spec.num_orbits;
        let (i, j) = (node.index as usize, next.index as usize);
        let (oi, si) = (i / s, i % s);
        let (oj, sj) = (j / s, j % s);
        let dir = if oi == oj && sj == (si + 1) % s {
            0
        } else if oi == oj && si == (sj + 1) % s {
            1
        } else if si == sj && oj == (oi + 1) % o {
            2
        } else if si == sj && oi == (oj + 1) % o {
            3
        } else {
            panic!("{node} and {next} are not grid neighbours");
        };
        4 * i + dir
    }

    fn propagation(&self, from: NodeId, to: NodeId, t: f64) -> f64 {
        propagation_delay(&self.world.position(from, t), &self.world.position(to, t))
    }

    fn handovers(&self, gs: usize) -> &[f64] {
        &self.handovers[gs]
    }
}

/// Two stations joined by one duplex link with fixed per-direction parameters.
#[derive(Debug, Clone)]
pub struct StaticNet {
    pub forward: IfaceSpec,
    pub reverse: IfaceSpec,
    pub forward_delay_s: f64,
    pub reverse_delay_s: f64,
}

impl StaticNet {
    pub fn symmetric(rate_bps: f64, capacity: usize, delay_s: f64) -> Self {
        let spec = IfaceSpec {
            rate_bps,
            capacity,
            reserved_bps: 0.0,
            gsl: false,
        };
        Self {
            forward: spec,
            reverse: spec,
            forward_delay_s: delay_s,
            reverse_delay_s: delay_s,
        }
    }

    /// Link whose delay equals the light time over `meters`.
    pub fn over_distance(rate_bps: f64, capacity: usize, meters: f64) -> Self {
        Self::symmetric(rate_bps, capacity, meters / SPEED_OF_LIGHT_M_S)
    }
}

impl Network for StaticNet {
    fn num_stations(&self) -> usize {
        2
    }

    fn interfaces(&self) -> Vec<IfaceSpec> {
        vec![self.forward, self.reverse]
    }

    fn epoch_starts(&self) -> Vec<f64> {
        vec![0.0]
    }

    fn next_hop(&self, _epoch: usize, node: NodeId, dst: NodeId) -> Option<NodeId> {
        (node != dst && node.is_station() && dst.is_station() && node.index < 2 && dst.index < 2)
            .then_some(dst)
    }

    fn interface(&self, node: NodeId, _next: NodeId) -> usize {
        node.index as usize
    }

    fn propagation(&self, from: NodeId, _to: NodeId, _t: f64) -> f64 {
        if from.index == 0 {
            self.forward_delay_s
        } else {
            self.reverse_delay_s
        }
    }

    fn handovers(&self, _gs: usize) -> &[f64] {
        &[]
    }
}
