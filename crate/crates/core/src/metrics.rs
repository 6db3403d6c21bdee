//! Series construction and comparison: goodput binning, MAE, R², Pearson, lag search.

use serde::Serialize;
use thiserror::Error;

use crate::traffic::PingResult;

pub const DEFAULT_GOODPUT_BIN_S: f64 = 0.1;
pub const DEFAULT_MAX_LAG_S: f64 = 3.0;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("series differ: {0}")]
    Mismatch(String),
    #[error("correlation undefined for a zero-variance series")]
    ZeroVariance,
    #[error("usage error: {0}")]
    Usage(String),
}

/// Uniformly binned series; `NaN` marks a missing value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeSeries {
    pub t0_s: f64,
    pub bin_s: f64,
    pub values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(t0_s: f64, bin_s: f64, values: Vec<f64>) -> Result<Self, MetricsError> {
        if !(bin_s > 0.0 && bin_s.is_finite()) {
            return Err(MetricsError::Usage(format!("bin width {bin_s} must be positive")));
        }
        Ok(Self { t0_s, bin_s, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0_s + i as f64 * self.bin_s
    }

    /// Mean of the finite values.
    pub fn mean(&self) -> f64 {
        let v: Vec<f64> = self.values.iter().copied().filter(|x| x.is_finite()).collect();
        if v.is_empty() {
            return f64::NAN;
        }
        v.iter().sum::<f64>() / v.len() as f64
    }

    /// Series delayed by `k` bins: `out[i] = self[i - k]`, `NaN` where undefined.
    pub fn shifted(&self, k: i64) -> TimeSeries {
        let n = self.len() as i64;
        let values = (0..n)
            .map(|i| {
                let j = i - k;
                if (0..n).contains(&j) {
                    self.values[j as usize]
                } else {
                    f64::NAN
                }
            })
            .collect();
        TimeSeries {
            t0_s: self.t0_s,
            bin_s: self.bin_s,
            values,
        }
    }
}

fn bin_count(duration_s: f64, bin_s: f64) -> usize {
    ((duration_s / bin_s) - 1e-9).ceil().max(0.0) as usize
}

/// Bin of `t`, consistent with bin edges at `t0 + i * bin`.
fn bin_index(t: f64, t0_s: f64, bin_s: f64) -> Option<usize> {
    if !(t >= t0_s) {
        return None;
    }
    let mut i = ((t - t0_s) / bin_s).floor() as usize;
    while i > 0 && t0_s + i as f64 * bin_s > t {
        i -= 1;
    }
    while t0_s + (i + 1) as f64 * bin_s <= t {
        i += 1;
    }
    Some(i)
}

/// Goodput in bps per bin from `(time_s, payload_bytes)` delivery events.
/// Events outside `[t0, t0 + duration)` are ignored.
pub fn goodput_series(
    deliveries: &[(f64, u64)],
    t0_s: f64,
    duration_s: f64,
    bin_s: f64,
) -> Result<TimeSeries, MetricsError> {
    let mut ts = TimeSeries::new(t0_s, bin_s, Vec::new())?;
    let n = bin_count(duration_s, bin_s);
    let mut bits = vec![0u64; n];
    for &(t, bytes) in deliveries {
        if let Some(i) = bin_index(t, t0_s, bin_s).filter(|&i| i < n) {
            bits[i] += bytes * 8;
        }
    }
    ts.values = bits.into_iter().map(|b| b as f64 / bin_s).collect();
    Ok(ts)
}

/// RTT in seconds per probe slot of width `interval_s`; timeouts are `NaN`.
pub fn ping_rtt_series(
    results: &[PingResult],
    t0_s: f64,
    duration_s: f64,
    interval_s: f64,
) -> Result<TimeSeries, MetricsError> {
    let mut ts = TimeSeries::new(t0_s, interval_s, Vec::new())?;
    let n = bin_count(duration_s, interval_s);
    ts.values = vec![f64::NAN; n];
    for r in results {
        if let Some(i) = bin_index(r.send_s, t0_s, interval_s).filter(|&i| i < n) {
            ts.values[i] = r.rtt_s.unwrap_or(f64::NAN);
        }
    }
    Ok(ts)
}

fn check_pair(a: &TimeSeries, b: &TimeSeries) -> Result<(), MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::Mismatch(format!("lengths {} and {}", a.len(), b.len())));
    }
    if (a.bin_s - b.bin_s).abs() > 1e-12 * a.bin_s.max(b.bin_s) {
        return Err(MetricsError::Mismatch(format!("bins {} s and {} s", a.bin_s, b.bin_s)));
    }
    Ok(())
}

/// Pairs where both values are finite.
fn finite_pairs(a: &[f64], b: &[f64]) -> (Vec<f64>, Vec<f64>) {
    a.iter()
        .zip(b)
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .map(|(x, y)| (*x, *y))
        .unzip()
}

/// Mean absolute error over pairs where both values are present.
pub fn mae(a: &TimeSeries, b: &TimeSeries) -> Result<f64, MetricsError> {
    check_pair(a, b)?;
    let (x, y) = finite_pairs(&a.values, &b.values);
    if x.is_empty() {
        return Err(MetricsError::Usage("no overlapping values".into()));
    }
    Ok(x.iter().zip(&y).map(|(p, q)| (p - q).abs()).sum::<f64>() / x.len() as f64)
}

fn pearson_slices(x: &[f64], y: &[f64]) -> Result<f64, MetricsError> {
    let (x, y) = finite_pairs(x, y);
    if x.len() < 2 {
        return Err(MetricsError::Usage("fewer than two overlapping values".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (p, q) in x.iter().zip(&y) {
        let (dx, dy) = (p - mx, q - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(MetricsError::ZeroVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

pub fn pearson(a: &TimeSeries, b: &TimeSeries) -> Result<f64, MetricsError> {
    check_pair(a, b)?;
    pearson_slices(&a.values, &b.values)
}

/// Coefficient of determination of `b` as a prediction of the reference `a`.
pub fn r_squared(a: &TimeSeries, b: &TimeSeries) -> Result<f64, MetricsError> {
    check_pair(a, b)?;
    let (x, y) = finite_pairs(&a.values, &b.values);
    if x.len() < 2 {
        return Err(MetricsError::Usage("fewer than two overlapping values".into()));
    }
    let mx = x.iter().sum::<f64>() / x.len() as f64;
    let ss_tot: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(MetricsError::ZeroVariance);
    }
    let ss_res: f64 = x.iter().zip(&y).map(|(p, q)| (p - q).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LagResult {
    /// `b` trails `a` by this many bins.
    pub lag_bins: i64,
    pub pearson: f64,
}

/// Integer shift in `[-max_lag, max_lag]` maximizing Pearson between `a[i]`
/// and `b[i + lag]` on the overlap; ties keep the smaller `|lag|`.
pub fn best_lag(a: &TimeSeries, b: &TimeSeries, max_lag_bins: usize) -> Result<LagResult, MetricsError> {
    check_pair(a, b)?;
    let n = a.len();
    if 2 * max_lag_bins >= n {
        return Err(MetricsError::Usage(format!(
            "max lag {max_lag_bins} must be below half the length {n}"
        )));
    }
    let mut best: Option<LagResult> = None;
    let candidates = std::iter::once(0i64)
        .chain((1..=max_lag_bins as i64).flat_map(|k| [-k, k]));
    for lag in candidates {
        let (xa, yb) = if lag >= 0 {
            let k = lag as usize;
            (&a.values[..n - k], &b.values[k..])
        } else {
            let k = (-lag) as usize;
            (&a.values[k..], &b.values[..n - k])
        };
        let Ok(r) = pearson_slices(xa, yb) else {
            continue;
        };
        if best.is_none_or(|b| r > b.pearson) {
            best = Some(LagResult { lag_bins: lag, pearson: r });
        }
    }
    best.ok_or_else(|| MetricsError::Usage("no lag with a defined correlation".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Comparison {
    pub mae: f64,
    pub r_squared: f64,
    pub pearson: f64,
    pub lag_s: f64,
    pub lag_pearson: f64,
    pub reference_mean: f64,
}

/// All comparison metrics of `b` against the reference `a`.
pub fn compare(a: &TimeSeries, b: &TimeSeries, max_lag_s: f64) -> Result<Comparison, MetricsError> {
    let max_bins = ((max_lag_s / a.bin_s).round() as usize).min(a.len().saturating_sub(1) / 2);
    let lag = best_lag(a, b, max_bins)?;
    Ok(Comparison {
        mae: mae(a, b)?,
        r_squared: r_squared(a, b)?,
        pearson: pearson(a, b)?,
        lag_s: lag.lag_bins as f64 * a.bin_s,
        lag_pearson: lag.pearson,
        reference_mean: a.mean(),
    })
}
