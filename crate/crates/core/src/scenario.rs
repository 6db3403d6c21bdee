//! Scenario files: every simulation, traffic and trace parameter with a named key.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{read_ground_stations, satellite_position, ConstellationSpec, GroundStation, EARTH_ROTATION_RAD_S};
use crate::netsim::SimConfig;
use crate::replay::{EndPolicy, StartMode};
use crate::tracer::TracerConfig;
use crate::traffic::FlowParams;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario is invalid: {0}")]
    Invalid(String),
    #[error("cannot read {path}: {msg}")]
    Io { path: PathBuf, msg: String },
    #[error("malformed scenario: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Workload {
    Speedtest,
    Ping,
    #[default]
    Both,
}

impl Workload {
    pub fn speedtest(&self) -> bool {
        matches!(self, Workload::Speedtest | Workload::Both)
    }

    pub fn ping(&self) -> bool {
        matches!(self, Workload::Ping | Workload::Both)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficParams {
    pub num_flows: usize,
    pub rate_min_bps: f64,
    pub rate_max_bps: f64,
    pub duration_min_s: f64,
    pub duration_max_s: f64,
    /// Defaults to half the simulated duration.
    pub peak_s: Option<f64>,
    /// Defaults to a sixth of the simulated duration.
    pub sigma_s: Option<f64>,
}

impl Default for TrafficParams {
    fn default() -> Self {
        Self {
            num_flows: 10_000,
            rate_min_bps: 0.1e6,
            rate_max_bps: 2.0e6,
            duration_min_s: 10.0,
            duration_max_s: 15.0,
            peak_s: None,
            sigma_s: None,
        }
    }
}

impl TrafficParams {
    pub fn flow_params(&self, sim_duration_s: f64) -> FlowParams {
        let base = FlowParams::with_duration(sim_duration_s);
        FlowParams {
            num_flows: self.num_flows,
            rate_min_bps: self.rate_min_bps,
            rate_max_bps: self.rate_max_bps,
            duration_min_s: self.duration_min_s,
            duration_max_s: self.duration_max_s,
            peak_s: self.peak_s.unwrap_or(base.peak_s),
            sigma_s: self.sigma_s.unwrap_or(base.sigma_s),
            sim_duration_s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraceParams {
    pub interval_s: f64,
    pub group_n: usize,
    pub delay_offset_us: i64,
}

impl Default for TraceParams {
    fn default() -> Self {
        Self {
            interval_s: 0.002,
            group_n: 5,
            delay_offset_us: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PingParams {
    pub interval_s: f64,
    pub payload_bytes: u32,
}

impl Default for PingParams {
    fn default() -> Self {
        Self {
            interval_s: 0.5,
            payload_bytes: 56,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ReplayParams {
    pub start_mode: StartMode,
    pub end_policy: EndPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    pub flows: u64,
    pub sim: u64,
    pub loss: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self {
            flows: 1,
            sim: 1,
            loss: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub constellation: ConstellationSpec,
    /// Station CSV, relative to the scenario file; used when `stations` is empty.
    pub stations_file: Option<PathBuf>,
    pub stations: Vec<GroundStation>,
    /// Station ids of the measured endpoint pair (A, B).
    pub endpoints: (u32, u32),
    pub duration_s: f64,
    pub fs_interval_s: f64,
    pub handover_loss_s: f64,
    pub reconfig_interval_s: f64,
    pub reconfig_duration_s: f64,
    pub gsl_reservation: BTreeMap<u32, f64>,
    pub drain_s: f64,
    pub traffic: TrafficParams,
    pub trace: TraceParams,
    pub workload: Workload,
    pub ping: PingParams,
    pub replay: ReplayParams,
    pub seeds: Seeds,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            name: "default".into(),
            constellation: ConstellationSpec::kuiper(),
            stations_file: None,
            stations: default_stations(),
            endpoints: (0, 1),
            duration_s: 200.0,
            fs_interval_s: 0.1,
            handover_loss_s: 0.25,
            reconfig_interval_s: 15.0,
            reconfig_duration_s: 0.1,
            gsl_reservation: BTreeMap::new(),
            drain_s: 5.0,
            traffic: TrafficParams::default(),
            trace: TraceParams::default(),
            workload: Workload::Both,
            ping: PingParams::default(),
            replay: ReplayParams::default(),
            seeds: Seeds::default(),
        }
    }
}

/// A handful of large cities.
fn default_stations() -> Vec<GroundStation> {
    [
        ("Berlin", 52.52, 13.405),
        ("New York", 40.7128, -74.006),
        ("London", 51.5074, -0.1278),
        ("Tokyo", 35.6762, 139.6503),
        ("Sao Paulo", -23.5505, -46.6333),
        ("Mumbai", 19.076, 72.8777),
        ("Lagos", 6.5244, 3.3792),
        ("Sydney", -33.8688, 151.2093),
        ("Mexico City", 19.4326, -99.1332),
        ("Cairo", 30.0444, 31.2357),
    ]
    .iter()
    .enumerate()
    .map(|(i, &(n, lat, lon))| GroundStation::new(i as u32, n, lat, lon))
    .collect()
}

/// Latitude and Earth-fixed longitude below satellite `(orbit, slot)` at `t`.
pub fn sub_satellite_point(spec: &ConstellationSpec, orbit: usize, slot: usize, t: f64) -> (f64, f64) {
    let p = satellite_position(spec, orbit, slot, t).expect("satellite index in range");
    let lat = (p.z / p.norm()).asin().to_degrees();
    let lon = (p.y.atan2(p.x) - EARTH_ROTATION_RAD_S * t).to_degrees();
    (lat, (lon + 540.0).rem_euclid(360.0) - 180.0)
}

impl Scenario {
    /// Desk-scale shell: 8x8 at 600 km, 53 deg, 20 Mbps links, 100-packet
    /// queues, 10 stations, 60 s, 500 background flows scaled to the shell.
    /// Stations sit under distinct satellites at mid-run.
    pub fn desk() -> Self {
        let constellation = ConstellationSpec {
            altitude_km: 600.0,
            num_orbits: 8,
            sats_per_orbit: 8,
            inclination_deg: 53.0,
            phase_factor: 0,
            min_elevation_deg: 25.0,
            isl_rate_bps: 20e6,
            gsl_rate_bps: 20e6,
            isl_queue_pkts: 100,
            gsl_queue_pkts: 100,
        };
        let duration_s = 60.0;
        let picks = [(0, 1), (4, 3), (1, 4), (5, 6), (2, 7), (6, 0), (3, 2), (7, 5), (0, 5), (4, 7)];
        let stations = picks
            .iter()
            .enumerate()
            .map(|(i, &(o, s))| {
                let (lat, lon) = sub_satellite_point(&constellation, o, s, duration_s / 2.0);
                GroundStation::new(i as u32, format!("desk-{o}-{s}"), lat, lon)
            })
            .collect();
        Self {
            name: "desk".into(),
            constellation,
            stations,
            endpoints: (0, 4),
            duration_s,
            traffic: TrafficParams {
                num_flows: 500,
                rate_min_bps: 0.04e6,
                rate_max_bps: 0.8e6,
                duration_min_s: 3.0,
                duration_max_s: 4.5,
                peak_s: None,
                sigma_s: None,
            },
            ..Self::default()
        }
    }

    /// Desk scenario on a 16x16 shell at 630 km, 51.9 deg, with the city
    /// stations plus one high-latitude station (id 10) at the coverage edge.
    fn wide_shell(name: &str, endpoints: (u32, u32)) -> Self {
        let desk = Self::desk();
        let constellation = ConstellationSpec {
            altitude_km: 630.0,
            num_orbits: 16,
            sats_per_orbit: 16,
            inclination_deg: 51.9,
            ..desk.constellation.clone()
        };
        let mut stations = default_stations();
        stations.push(GroundStation::new(10, "Edge", 59.0, -120.0));
        Self {
            name: name.into(),
            constellation,
            stations,
            endpoints,
            ..desk
        }
    }

    /// Berlin to London over the 16x16 shell; the path sees several
    /// station-level handovers per minute.
    pub fn handover() -> Self {
        Self::wide_shell("handover", (0, 2))
    }

    /// The edge station to New York; the edge station loses all visible
    /// satellites for several seconds mid-run.
    pub fn dropout() -> Self {
        Self::wide_shell("dropout", (10, 1))
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "default" => Some(Self::default()),
            "desk" => Some(Self::desk()),
            "handover" => Some(Self::handover()),
            "dropout" => Some(Self::dropout()),
            _ => None,
        }
    }

    pub const PRESETS: [&'static str; 4] = ["default", "desk", "handover", "dropout"];

    pub fn from_json(text: &str, base_dir: Option<&Path>) -> Result<Self, ScenarioError> {
        let mut sc: Scenario = serde_json::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        if let Some(file) = sc.stations_file.clone() {
            if sc.stations.is_empty() || sc.stations == default_stations() {
                let path = match base_dir {
                    Some(d) if file.is_relative() => d.join(&file),
                    _ => file,
                };
                let io = |msg: String| ScenarioError::Io {
                    path: path.clone(),
                    msg,
                };
                let f = std::fs::File::open(&path).map_err(|e| io(e.to_string()))?;
                sc.stations = read_ground_stations(f).map_err(|e| io(e.to_string()))?;
            }
        }
        sc.validate()?;
        Ok(sc)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        Self::from_json(&text, path.parent())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// Index of station `id` in the station list.
    pub fn station_index(&self, id: u32) -> Result<u32, ScenarioError> {
        self.stations
            .iter()
            .position(|g| g.id == id)
            .map(|i| i as u32)
            .ok_or_else(|| ScenarioError::Invalid(format!("unknown station id {id}")))
    }

    /// Endpoint pair as station indices.
    pub fn endpoint_indices(&self) -> Result<(u32, u32), ScenarioError> {
        Ok((self.station_index(self.endpoints.0)?, self.station_index(self.endpoints.1)?))
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            spec: self.constellation.clone(),
            stations: self.stations.clone(),
            fs_interval_s: self.fs_interval_s,
            duration_s: self.duration_s,
            handover_loss_s: self.handover_loss_s,
            reconfig_interval_s: self.reconfig_interval_s,
            reconfig_duration_s: self.reconfig_duration_s,
            gsl_reservation: self.gsl_reservation.clone(),
            seed: self.seeds.sim,
            drain_s: self.drain_s,
        }
    }

    pub fn tracer_config(&self) -> Result<TracerConfig, ScenarioError> {
        let (a, b) = self.endpoint_indices()?;
        let mut t = TracerConfig::new(a, b);
        t.interval_s = self.trace.interval_s;
        t.group_n = self.trace.group_n;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::Invalid(m));
        if self.stations.len() < 2 {
            return bad("at least two stations are required".into());
        }
        let (a, b) = self.endpoint_indices()?;
        if a == b {
            return bad("endpoints must be distinct stations".into());
        }
        self.sim_config()
            .validate()
            .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        if self.traffic.num_flows > 0 {
            self.traffic
                .flow_params(self.duration_s)
                .validate()
                .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        }
        self.tracer_config()?
            .validate()
            .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        let res_ms = self.trace.interval_s * self.trace.group_n as f64 * 1000.0;
        if (res_ms - res_ms.round()).abs() > 1e-9 || res_ms.round() < 1.0 {
            return bad(format!("trace resolution {res_ms} ms must be a whole number of ms"));
        }
        if !(self.ping.interval_s > 0.0) {
            return bad("ping interval must be positive".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{elevation_deg, ground_station_position};

    #[test]
    fn defaults_round_trip() {
        let sc = Scenario::default();
        sc.validate().unwrap();
        let back = Scenario::from_json(&sc.to_json(), None).unwrap();
        assert_eq!(back, sc);
        let partial = Scenario::from_json(r#"{"name": "x", "duration_s": 10}"#, None).unwrap();
        assert_eq!(partial.name, "x");
        assert_eq!(partial.handover_loss_s, 0.25);
        assert_eq!(partial.trace.group_n, 5);
    }

    #[test]
    fn rejects_bad_scenarios() {
        assert!(Scenario::from_json(r#"{"endpoints": [0, 0]}"#, None).is_err());
        assert!(Scenario::from_json(r#"{"endpoints": [0, 99]}"#, None).is_err());
        assert!(Scenario::from_json(r#"{"bogus": 1}"#, None).is_err());
        assert!(Scenario::from_json(r#"{"trace": {"interval_s": 0.0015}}"#, None).is_err());
    }

    #[test]
    fn desk_stations_stay_covered() {
        let sc = Scenario::desk();
        sc.validate().unwrap();
        for (i, gs) in sc.stations.iter().enumerate() {
            let (o, s) = [(0, 1), (4, 3), (1, 4), (5, 6), (2, 7), (6, 0), (3, 2), (7, 5), (0, 5), (4, 7)][i];
            for k in 0..=12 {
                let t = k as f64 * 5.0;
                let el = elevation_deg(
                    &ground_station_position(gs, t),
                    &satellite_position(&sc.constellation, o, s, t).unwrap(),
                )
                .unwrap();
                assert!(el > sc.constellation.min_elevation_deg, "station {i} at {t}: {el}");
            }
        }
    }

    #[test]
    fn stations_file_is_resolved() {
        let dir = tempfile::tempdir().unwrap();
        let mut csv = Vec::new();
        crate::geom::write_ground_stations(&mut csv, &default_stations()[..3]).unwrap();
        std::fs::write(dir.path().join("gs.csv"), csv).unwrap();
        std::fs::write(
            dir.path().join("s.json"),
            r#"{"stations_file": "gs.csv", "stations": [], "endpoints": [1, 2]}"#,
        )
        .unwrap();
        let sc = Scenario::load(&dir.path().join("s.json")).unwrap();
        assert_eq!(sc.stations.len(), 3);
    }
}
