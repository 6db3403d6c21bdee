//! Property checks shared by the property suite and the acceptance harness.
//! Each check runs a deterministic proptest runner and reports the first
//! minimal failure as text.

use std::collections::BinaryHeap;

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use statrs::distribution::{ContinuousCDF, Normal};

use leotrace::geom::{satellite_position, ConstellationSpec};
use leotrace::metrics::{best_lag, compare, TimeSeries};
use leotrace::replay::{Channel, ChannelConfig};
use leotrace::topology::floyd_warshall;
use leotrace::tracefile::{self, Direction, TraceFile, TraceMeta};
use leotrace::tracer::TraceRecord;
use leotrace::traffic::{generate_background_flows, FlowParams, FlowSpec};

pub fn runner(cases: u32) -> TestRunner {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn run<S: Strategy>(
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String>
where
    S::Value: std::fmt::Debug,
{
    runner(cases).run(&strategy, test).map_err(|e| e.to_string())
}

pub const PERIODICITY_REL_TOL: f64 = 1e-6;

/// Every satellite returns to its inertial position after one orbital period.
pub fn orbital_periodicity(cases: u32) -> Result<(), String> {
    let strategy = (300.0..2000.0f64, 1..40usize, 1..40usize, 0.1..180.0f64, 0..1000usize, 0.0..1e5f64);
    run(cases, strategy, |(alt, orbits, sats, inc, pick, t)| {
        let spec = ConstellationSpec {
            altitude_km: alt,
            num_orbits: orbits,
            sats_per_orbit: sats,
            inclination_deg: inc,
            phase_factor: pick % orbits,
            ..ConstellationSpec::kuiper()
        };
        let (o, s) = (pick % orbits, (pick / orbits) % sats);
        let a = satellite_position(&spec, o, s, t).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let b = satellite_position(&spec, o, s, t + spec.period_s()).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let rel = a.distance(&b) / a.norm();
        prop_assert!(rel <= PERIODICITY_REL_TOL, "relative drift {rel} at t={t}");
        Ok(())
    })
}

fn dijkstra(n: usize, edges: &[(usize, usize, f64)], src: usize) -> Vec<Option<f64>> {
    let mut adj = vec![Vec::new(); n];
    for &(a, b, w) in edges {
        if a != b {
            adj[a].push((b, w));
            adj[b].push((a, w));
        }
    }
    let mut dist: Vec<Option<f64>> = vec![None; n];
    let mut heap = BinaryHeap::new();
    dist[src] = Some(0.0);
    heap.push(std::cmp::Reverse((0u64, src)));
    while let Some(std::cmp::Reverse((d, u))) = heap.pop() {
        if dist[u].is_some_and(|x| (x as u64) < d) {
            continue;
        }
        for &(v, w) in &adj[u] {
            let nd = d + w as u64;
            if dist[v].is_none_or(|x| nd < x as u64) {
                dist[v] = Some(nd as f64);
                heap.push(std::cmp::Reverse((nd, v)));
            }
        }
    }
    dist
}

fn random_graph() -> impl Strategy<Value = (usize, Vec<(usize, usize, f64)>)> {
    (2..40usize).prop_flat_map(|n| {
        let edge = (0..n, 0..n, 1..1000u32).prop_map(|(a, b, w)| (a, b, w as f64));
        (Just(n), prop::collection::vec(edge, 0..4 * n))
    })
}

/// All-pairs distances agree with per-source Dijkstra, and following the
/// next-hop table from any source sums to the reported distance.
pub fn floyd_warshall_matches_dijkstra(cases: u32) -> Result<(), String> {
    run(cases, random_graph(), |(n, edges)| {
        let ap = floyd_warshall(n, &edges, &vec![true; n]);
        let weight = |a: usize, b: usize| {
            edges
                .iter()
                .filter(|e| (e.0 == a && e.1 == b) || (e.0 == b && e.1 == a))
                .map(|e| e.2)
                .fold(f64::INFINITY, f64::min)
        };
        for s in 0..n {
            let dj = dijkstra(n, &edges, s);
            for t in 0..n {
                prop_assert_eq!(ap.distance(s, t), dj[t], "{} -> {}", s, t);
                if s == t || dj[t].is_none() {
                    continue;
                }
                let (mut here, mut sum) = (s, 0.0);
                while here != t {
                    let next = ap.next(here, t).ok_or_else(|| TestCaseError::fail("missing hop"))?;
                    sum += weight(here, next);
                    here = next;
                }
                prop_assert_eq!(Some(sum), dj[t]);
            }
        }
        Ok(())
    })
}

fn trace_record(t_ms: u64) -> impl Strategy<Value = TraceRecord> {
    let sentinel = Just((-1i64, -1i64, -1i64, 1000u32));
    let measured = (0..2_000_000i64, 0..10_000_000_000i64, 0..100_000i64, 0..=1000u32);
    (
        prop_oneof![1 => sentinel, 9 => measured],
        any::<u64>(),
        prop::option::of(-1..100_000i64),
    )
        .prop_map(move |((delay_us, rate_bps, queue_capacity_pkts, loss), route_id, bdp_pkts)| TraceRecord {
            t_ms,
            delay_us,
            rate_bps,
            queue_capacity_pkts,
            loss_ratio: loss as f64 / 1000.0,
            route_id,
            bdp_pkts,
        })
}

pub fn trace_file() -> impl Strategy<Value = TraceFile> {
    let meta = (
        "[a-zA-Z0-9_ -]{0,16}",
        prop_oneof![Just(Direction::Forward), Just(Direction::Return)],
        prop_oneof![Just(1u64), Just(2), Just(10), Just(20), Just(100)],
        any::<u64>(),
        prop::collection::btree_map("x_[a-z]{1,6}", "[a-zA-Z0-9_.=]{0,8}", 0..3),
    );
    (meta, 0..120usize).prop_flat_map(|((scenario, direction, res, seed, extra), n)| {
        let records: Vec<_> = (0..n as u64).map(|i| trace_record(i * res)).collect();
        records.prop_map(move |records| TraceFile {
            meta: TraceMeta {
                scenario: scenario.clone(),
                direction,
                resolution_ms: res,
                seed,
                extra: extra.clone(),
            },
            records,
        })
    })
}

/// Writing then reading a trace file is the identity, and the bytes are canonical.
pub fn trace_round_trip(cases: u32) -> Result<(), String> {
    run(cases, trace_file(), |tf| {
        let mut bytes = Vec::new();
        tracefile::write(&tf, &mut bytes).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let back = tracefile::read(bytes.as_slice()).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert_eq!(&back, &tf);
        prop_assert_eq!(back.to_bytes().unwrap(), bytes);
        Ok(())
    })
}

/// Varying trace with few route ids so route epochs repeat and delays jump.
fn guard_case() -> impl Strategy<Value = (TraceFile, Vec<(f64, u32)>)> {
    let rec = (0..3u64, 0..40_000i64, 1..50u32, 0..30i64, prop_oneof![8 => Just(0u32), 1 => 0..=1000u32]);
    let records = prop::collection::vec(rec, 1..60);
    let offered = prop::collection::vec((0.0..0.004f64, 40..1500u32), 1..300);
    (records, offered).prop_map(|(records, offered)| {
        let tf = TraceFile {
            meta: TraceMeta::new("guard", Direction::Forward, 10, 0),
            records: records
                .into_iter()
                .enumerate()
                .map(|(i, (route, delay_us, mbps, cap, loss))| TraceRecord {
                    t_ms: i as u64 * 10,
                    delay_us,
                    rate_bps: mbps as i64 * 1_000_000,
                    queue_capacity_pkts: cap,
                    loss_ratio: loss as f64 / 1000.0,
                    route_id: route,
                    bdp_pkts: None,
                })
                .collect(),
        };
        let mut t = 0.0;
        let arrivals = offered
            .into_iter()
            .map(|(gap, size)| {
                t += gap;
                (t, size)
            })
            .collect();
        (tf, arrivals)
    })
}

/// Consecutive delivered packets whose arrival records share a route id are
/// released in arrival order.
pub fn reorder_guard(cases: u32) -> Result<(), String> {
    run(cases, guard_case(), |(tf, offered)| {
        let routes: Vec<u64> = tf.records.iter().map(|r| r.route_id).collect();
        let mut ch = Channel::new(ChannelConfig::new(tf), 0.0).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let mut prev: Option<(u64, f64)> = None;
        for (arrival, size) in offered {
            let v = ch.offer(size, arrival).map_err(|e| TestCaseError::fail(e.to_string()))?;
            let Some(release) = v.release() else {
                continue;
            };
            let route = routes[ch.state().cursor];
            if let Some((r, last)) = prev {
                if r == route {
                    prop_assert!(release >= last, "route {route}: {release} before {last}");
                }
            }
            prop_assert!(release >= arrival);
            prev = Some((route, release));
        }
        Ok(())
    })
}

pub const LAG_MAX_BINS: i64 = 10;

/// A series and a copy shifted by a known number of bins yield exactly that lag.
pub fn lag_recovery(cases: u32) -> Result<(), String> {
    let strategy = (prop::collection::vec(0.0..100.0f64, 60..300), -LAG_MAX_BINS..=LAG_MAX_BINS);
    run(cases, strategy, |(base, k)| {
        let k_max = LAG_MAX_BINS as usize;
        let n = base.len() - 2 * k_max;
        let start_b = (k_max as i64 - k) as usize;
        let bin = 0.1;
        let a = TimeSeries::new(0.0, bin, base[k_max..k_max + n].to_vec()).unwrap();
        let b = TimeSeries::new(0.0, bin, base[start_b..start_b + n].to_vec()).unwrap();
        let lag = best_lag(&a, &b, k_max).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert_eq!(lag.lag_bins, k);
        let c = compare(&a, &b, LAG_MAX_BINS as f64 * bin).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert_eq!((c.lag_s / bin).round() as i64, k);
        Ok(())
    })
}

pub const KS_ALPHA: f64 = 0.01;

/// Asymptotic Kolmogorov p-value of the one-sample statistic `d` over `n` draws.
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=200 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-12 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

pub fn ks_statistic(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            ((i + 1) as f64 / n - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

/// `(name, D, p)` for start times against the truncated normal and for rates
/// and durations against their uniform ranges.
pub fn flow_ks(params: &FlowParams, flows: &[FlowSpec]) -> Vec<(&'static str, f64, f64)> {
    let n = flows.len();
    let normal = Normal::new(params.peak_s, params.sigma_s).unwrap();
    let upper = params.sim_duration_s - params.duration_min_s;
    let (lo, hi) = (normal.cdf(0.0), normal.cdf(upper));
    let start_cdf = |x: f64| ((normal.cdf(x) - lo) / (hi - lo)).clamp(0.0, 1.0);
    let uniform = |a: f64, b: f64| move |x: f64| ((x - a) / (b - a)).clamp(0.0, 1.0);
    let stats = [
        ("start_s", ks_statistic(flows.iter().map(|f| f.start_s).collect(), start_cdf)),
        (
            "rate_bps",
            ks_statistic(
                flows.iter().map(|f| f.rate_bps).collect(),
                uniform(params.rate_min_bps, params.rate_max_bps),
            ),
        ),
        (
            "duration_s",
            ks_statistic(
                flows.iter().map(|f| f.duration_s).collect(),
                uniform(params.duration_min_s, params.duration_max_s),
            ),
        ),
    ];
    stats.into_iter().map(|(name, d)| (name, d, ks_p_value(d, n))).collect()
}

/// KS fit of the default 200 s flow set and the desk-scale set.
pub fn background_flow_fit() -> Result<Vec<(String, f64, f64)>, String> {
    let mut desk = leotrace::scenario::Scenario::desk().traffic.flow_params(60.0);
    desk.num_flows = 5000;
    let cases = [("default", FlowParams::with_duration(200.0), 10), ("desk", desk, 8)];
    let mut out = Vec::new();
    for (label, params, stations) in cases {
        let flows = generate_background_flows(&params, stations, 1).map_err(|e| e.to_string())?;
        for (name, d, p) in flow_ks(&params, &flows) {
            out.push((format!("{label}.{name}"), d, p));
        }
    }
    let failed: Vec<String> = out
        .iter()
        .filter(|c| c.2 < KS_ALPHA)
        .map(|c| format!("{} D={:.5} p={:.4}", c.0, c.1, c.2))
        .collect();
    if failed.is_empty() {
        Ok(out)
    } else {
        Err(failed.join(", "))
    }
}
