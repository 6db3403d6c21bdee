//! Orbital geometry for circular Walker-delta shells and a spherical,
//! rotating Earth.
//!
//! All public angles are in degrees, positions are meters in an
//! Earth-centered inertial frame whose x axis points at the ascending node
//! of orbit 0 and at longitude 0 at t = 0.

use std::f64::consts::PI;
use std::ops::Sub;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Mean Earth radius, meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;
/// Standard gravitational parameter of Earth, m³/s².
pub const EARTH_MU_M3_S2: f64 = 398_600.4418e9;
/// Sidereal rotation rate, rad/s.
pub const EARTH_ROTATION_RAD_S: f64 = 7.292_115_9e-5;
/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT_M_S: f64 = 299_792_458.0;

#[derive(Debug, Error)]
pub enum GeomError {
    #[error("satellite index out of range: orbit {orbit} slot {slot} (shell is {orbits}x{slots})")]
    Index {
        orbit: usize,
        slot: usize,
        orbits: usize,
        slots: usize,
    },
    #[error("degenerate geometry: {0}")]
    Degenerate(&'static str),
    #[error("invalid constellation: {0}")]
    InvalidSpec(String),
    #[error("invalid ground station {id}: {reason}")]
    InvalidStation { id: u32, reason: String },
    #[error("ground station file: {0}")]
    Csv(#[from] csv::Error),
}

/// One Walker-delta shell plus the link and queue configuration used by the
/// packet simulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstellationSpec {
    pub altitude_km: f64,
    pub num_orbits: usize,
    pub sats_per_orbit: usize,
    pub inclination_deg: f64,
    #[serde(default)]
    pub phase_factor: usize,
    pub min_elevation_deg: f64,
    pub isl_rate_bps: f64,
    pub gsl_rate_bps: f64,
    pub isl_queue_pkts: usize,
    pub gsl_queue_pkts: usize,
}

impl ConstellationSpec {
    fn shell(altitude_km: f64, orbits: usize, slots: usize, inc: f64, min_elev: f64) -> Self {
        Self {
            altitude_km,
            num_orbits: orbits,
            sats_per_orbit: slots,
            inclination_deg: inc,
            phase_factor: 0,
            min_elevation_deg: min_elev,
            isl_rate_bps: 50e6,
            gsl_rate_bps: 50e6,
            isl_queue_pkts: 200,
            gsl_queue_pkts: 200,
        }
    }

    pub fn kuiper() -> Self {
        Self::shell(630.0, 34, 34, 51.9, 30.0)
    }

    pub fn starlink() -> Self {
        Self::shell(550.0, 72, 22, 53.0, 25.0)
    }

    pub fn telesat() -> Self {
        Self::shell(1015.0, 27, 13, 98.98, 10.0)
    }

    pub fn validate(&self) -> Result<(), GeomError> {
        let bad = |msg: &str| Err(GeomError::InvalidSpec(msg.to_string()));
        if self.num_orbits == 0 || self.sats_per_orbit == 0 {
            return bad("num_orbits and sats_per_orbit must be at least 1");
        }
        if !(self.inclination_deg > 0.0 && self.inclination_deg <= 180.0) {
            return bad("inclination_deg must be in (0, 180]");
        }
        if !(self.min_elevation_deg >= 0.0 && self.min_elevation_deg < 90.0) {
            return bad("min_elevation_deg must be in [0, 90)");
        }
        if self.phase_factor >= self.num_orbits {
            return bad("phase_factor must be below num_orbits");
        }
        if !(self.altitude_km > 0.0) || !self.altitude_km.is_finite() {
            return bad("altitude_km must be positive");
        }
        if !(self.isl_rate_bps > 0.0 && self.gsl_rate_bps > 0.0) {
            return bad("link rates must be positive");
        }
        if self.isl_queue_pkts == 0 || self.gsl_queue_pkts == 0 {
            return bad("queue sizes must be positive");
        }
        Ok(())
    }

    pub fn num_satellites(&self) -> usize {
        self.num_orbits * self.sats_per_orbit
    }

    pub fn semi_major_axis_m(&self) -> f64 {
        EARTH_RADIUS_M + self.altitude_km * 1000.0
    }

    /// Orbital period from Kepler's third law, seconds.
    pub fn period_s(&self) -> f64 {
        let a = self.semi_major_axis_m();
        2.0 * PI * (a * a * a / EARTH_MU_M3_S2).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundStation {
    pub id: u32,
    pub name: String,
    pub latitude_deg: f64,
    pub longitude_deg: f64,
    pub altitude_m: f64,
}

impl GroundStation {
    pub fn new(id: u32, name: impl Into<String>, latitude_deg: f64, longitude_deg: f64) -> Self {
        Self {
            id,
            name: name.into(),
            latitude_deg,
            longitude_deg,
            altitude_m: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), GeomError> {
        let fail = |reason: &str| {
            Err(GeomError::InvalidStation {
                id: self.id,
                reason: reason.to_string(),
            })
        };
        if !(-90.0..=90.0).contains(&self.latitude_deg) {
            return fail("latitude outside [-90, 90]");
        }
        if !(-180.0..=180.0).contains(&self.longitude_deg) {
            return fail("longitude outside [-180, 180]");
        }
        if !self.altitude_m.is_finite() {
            return fail("altitude is not finite");
        }
        Ok(())
    }
}

/// Reads `id,name,latitude_deg,longitude_deg,altitude_m` rows.
pub fn read_ground_stations<R: std::io::Read>(reader: R) -> Result<Vec<GroundStation>, GeomError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let expected = ["id", "name", "latitude_deg", "longitude_deg", "altitude_m"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(GeomError::InvalidSpec(format!(
            "ground station header must be `{}`",
            expected.join(",")
        )));
    }
    let mut stations: Vec<GroundStation> = Vec::new();
    for row in rdr.deserialize() {
        let gs: GroundStation = row?;
        gs.validate()?;
        if stations.iter().any(|s| s.id == gs.id) {
            return Err(GeomError::InvalidStation {
                id: gs.id,
                reason: "duplicate id".into(),
            });
        }
        stations.push(gs);
    }
    Ok(stations)
}

pub fn write_ground_stations<W: std::io::Write>(
    writer: W,
    stations: &[GroundStation],
) -> Result<(), GeomError> {
    let mut wtr = csv::WriterBuilder::new().has_headers(true).from_writer(writer);
    for gs in stations {
        wtr.serialize(gs)?;
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Position3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Position3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn dot(&self, other: &Position3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn scale(&self, k: f64) -> Position3 {
        Position3::new(self.x * k, self.y * k, self.z * k)
    }

    pub fn distance(&self, other: &Position3) -> f64 {
        (*self - *other).norm()
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl Sub for Position3 {
    type Output = Position3;

    fn sub(self, rhs: Position3) -> Position3 {
        Position3::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

/// Position of satellite `(orbit, slot)` at time `t` on a circular orbit.
pub fn satellite_position(
    spec: &ConstellationSpec,
    orbit: usize,
    slot: usize,
    t: f64,
) -> Result<Position3, GeomError> {
    if orbit >= spec.num_orbits || slot >= spec.sats_per_orbit {
        return Err(GeomError::Index {
            orbit,
            slot,
            orbits: spec.num_orbits,
            slots: spec.sats_per_orbit,
        });
    }
    Ok(satellite_position_unchecked(spec, orbit, slot, t))
}

pub(crate) fn satellite_position_unchecked(
    spec: &ConstellationSpec,
    orbit: usize,
    slot: usize,
    t: f64,
) -> Position3 {
    let orbits = spec.num_orbits as f64;
    let slots = spec.sats_per_orbit as f64;
    let a = spec.semi_major_axis_m();
    let raan = 2.0 * PI * orbit as f64 / orbits;
    let anomaly = 2.0 * PI * slot as f64 / slots
        + 2.0 * PI * (orbit * spec.phase_factor) as f64 / (orbits * slots)
        + 2.0 * PI * t / spec.period_s();
    let inc = spec.inclination_deg.to_radians();

    let (su, cu) = anomaly.sin_cos();
    let (si, ci) = inc.sin_cos();
    let (sr, cr) = raan.sin_cos();
    Position3::new(
        a * (cu * cr - su * ci * sr),
        a * (cu * sr + su * ci * cr),
        a * su * si,
    )
}

/// Position of a ground station at time `t`, rotated with the Earth.
pub fn ground_station_position(gs: &GroundStation, t: f64) -> Position3 {
    let r = EARTH_RADIUS_M + gs.altitude_m;
    let lat = gs.latitude_deg.to_radians();
    let lon = gs.longitude_deg.to_radians() + EARTH_ROTATION_RAD_S * t;
    let (slat, clat) = lat.sin_cos();
    let (slon, clon) = lon.sin_cos();
    Position3::new(r * clat * clon, r * clat * slon, r * slat)
}

/// Elevation of `sat_pos` over the local horizon of `gs_pos`, degrees.
pub fn elevation_deg(gs_pos: &Position3, sat_pos: &Position3) -> Result<f64, GeomError> {
    let up_len = gs_pos.norm();
    if up_len == 0.0 {
        return Err(GeomError::Degenerate("ground position at Earth center"));
    }
    let line = *sat_pos - *gs_pos;
    let range = line.norm();
    if range == 0.0 {
        return Err(GeomError::Degenerate("satellite and station coincide"));
    }
    let sin_el = (line.dot(gs_pos) / (up_len * range)).clamp(-1.0, 1.0);
    Ok(sin_el.asin().to_degrees())
}

pub fn propagation_delay(a: &Position3, b: &Position3) -> f64 {
    a.distance(b) / SPEED_OF_LIGHT_M_S
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel_err(a: &Position3, b: &Position3) -> f64 {
        a.distance(b) / b.norm()
    }

    #[test]
    fn ascending_node_at_epoch() {
        let spec = ConstellationSpec::kuiper();
        let p = satellite_position(&spec, 0, 0, 0.0).unwrap();
        let a = spec.semi_major_axis_m();
        assert!((p.x - a).abs() < 1e-6);
        assert!(p.y.abs() < 1e-6 && p.z.abs() < 1e-6);
    }

    #[test]
    fn starlink_period_closed_form() {
        let spec = ConstellationSpec::starlink();
        let expected = 2.0 * PI * ((6371.0f64 + 550.0).powi(3) / 398_600.441_8).sqrt();
        assert!((spec.period_s() - expected).abs() < 1e-9 * expected);
        for (o, s) in [(0, 0), (3, 7), (71, 21)] {
            let p0 = satellite_position(&spec, o, s, 0.0).unwrap();
            let p1 = satellite_position(&spec, o, s, spec.period_s()).unwrap();
            assert!(rel_err(&p1, &p0) < 1e-6);
        }
    }

    #[test]
    fn neighbouring_slots_are_evenly_spaced() {
        let spec = ConstellationSpec::telesat();
        let a = satellite_position(&spec, 2, 4, 0.0).unwrap();
        let b = satellite_position(&spec, 2, 5, 0.0).unwrap();
        let angle = (a.dot(&b) / (a.norm() * b.norm())).acos().to_degrees();
        assert!((angle - 360.0 / spec.sats_per_orbit as f64).abs() < 1e-9);
    }

    #[test]
    fn index_errors() {
        let spec = ConstellationSpec::kuiper();
        assert!(matches!(
            satellite_position(&spec, 34, 0, 0.0),
            Err(GeomError::Index { .. })
        ));
        assert!(satellite_position(&spec, 0, 34, 0.0).is_err());
    }

    #[test]
    fn orbit_radius_is_constant() {
        let spec = ConstellationSpec::starlink();
        let a = spec.semi_major_axis_m();
        for k in 0..200 {
            let t = k as f64 * 37.3;
            let p = satellite_position(&spec, k % 72, k % 22, t).unwrap();
            assert!((p.norm() - a).abs() < 1e-3);
        }
    }

    #[test]
    fn periods_are_ordered_by_altitude() {
        let s = ConstellationSpec::starlink().period_s();
        let k = ConstellationSpec::kuiper().period_s();
        let t = ConstellationSpec::telesat().period_s();
        assert!(s < k && k < t);
    }

    #[test]
    fn station_positions() {
        let gs = GroundStation::new(0, "null-island", 0.0, 0.0);
        let p = ground_station_position(&gs, 0.0);
        assert!((p.x - EARTH_RADIUS_M).abs() < 1e-6 && p.y.abs() < 1e-6 && p.z.abs() < 1e-6);

        let pole = GroundStation::new(1, "pole", 90.0, 123.0);
        for t in [0.0, 1000.0, 54321.0] {
            let p = ground_station_position(&pole, t);
            assert!(p.x.abs() < 1e-6 && p.y.abs() < 1e-6);
            assert!((p.z - EARTH_RADIUS_M).abs() < 1e-6);
        }

        let quarter = 2.0 * PI / EARTH_ROTATION_RAD_S / 4.0;
        let p = ground_station_position(&gs, quarter);
        assert!(p.x.abs() < 1e-6 && (p.y - EARTH_RADIUS_M).abs() < 1e-6);
        // The sidereal day quoted in almanacs rounds the rate; 86164.0905 s
        // lands within a few meters of the quarter turn.
        let p = ground_station_position(&gs, 86_164.090_5 / 4.0);
        assert!(p.x.abs() < 5.0 && (p.y - EARTH_RADIUS_M).abs() < 1e-3);
    }

    #[test]
    fn elevation_cases() {
        let gs = Position3::new(EARTH_RADIUS_M, 0.0, 0.0);
        let zenith = gs.scale(1.0 + 550e3 / EARTH_RADIUS_M);
        assert!((elevation_deg(&gs, &zenith).unwrap() - 90.0).abs() < 1e-9);

        let horizon = Position3::new(EARTH_RADIUS_M, 1e6, 0.0);
        assert!(elevation_deg(&gs, &horizon).unwrap().abs() < 1e-9);

        let d = 500e3;
        let diag = Position3::new(EARTH_RADIUS_M + d, d, 0.0);
        assert!((elevation_deg(&gs, &diag).unwrap() - 45.0).abs() < 1e-9);

        let below = Position3::new(EARTH_RADIUS_M - 10.0, 1e5, 0.0);
        assert!(elevation_deg(&gs, &below).unwrap() < 0.0);

        assert!(elevation_deg(&gs, &gs).is_err());
        assert!(elevation_deg(&Position3::default(), &zenith).is_err());
    }

    #[test]
    fn elevation_grows_along_zenith() {
        let gs = Position3::new(EARTH_RADIUS_M, 0.0, 0.0);
        let mut last = f64::NEG_INFINITY;
        for k in 0..50 {
            let sat = Position3::new(EARTH_RADIUS_M + 100e3 + k as f64 * 50e3, 400e3, 0.0);
            let e = elevation_deg(&gs, &sat).unwrap();
            assert!(e >= last);
            last = e;
        }
    }

    #[test]
    fn light_delay() {
        let a = Position3::new(1.0, 2.0, 3.0);
        assert_eq!(propagation_delay(&a, &a), 0.0);
        let b = Position3::new(1.0, 2.0, 600_003.0);
        let d = propagation_delay(&a, &b);
        assert!((d - 2.00138e-3).abs() < 1e-8);
        assert_eq!(d, propagation_delay(&b, &a));
    }

    #[test]
    fn station_csv_round_trip() {
        let stations = vec![
            GroundStation::new(0, "Boston", 42.36, -71.06),
            GroundStation::new(1, "Paris", 48.86, 2.35),
        ];
        let mut buf = Vec::new();
        write_ground_stations(&mut buf, &stations).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("id,name,latitude_deg,longitude_deg,altitude_m\n"));
        assert_eq!(read_ground_stations(buf.as_slice()).unwrap(), stations);

        let dup = "id,name,latitude_deg,longitude_deg,altitude_m\n0,a,1,1,0\n0,b,2,2,0\n";
        assert!(read_ground_stations(dup.as_bytes()).is_err());
        let bad = "id,name,latitude_deg,longitude_deg,altitude_m\n0,a,91,1,0\n";
        assert!(read_ground_stations(bad.as_bytes()).is_err());
    }
}
