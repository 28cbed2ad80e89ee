//! Spectral figures of merit: 3 dB bandwidth, extinction ratio, passband
//! roughness, crosstalk and attenuation.
//!
//! The stopband is every grid frequency at least a quarter of the grid span
//! away from the peak. Roughness is the population standard deviation of the
//! in-band dB response over the central half of the 3 dB band, with the
//! response interpolated linearly between grid samples.

use crate::error::{Error, Result};

/// Floor applied before taking logarithms, so that a perfect null maps to -300 dB.
const POWER_FLOOR: f64 = 1e-30;
/// Grid samples within this many dB of the maximum count as tied peaks.
const PEAK_TIE_DB: f64 = 1e-9;

pub fn to_db(power: &[f64]) -> Vec<f64> {
    power.iter().map(|p| 10.0 * p.max(POWER_FLOOR).log10()).collect()
}

/// The 3 dB band around the main peak of a dB response.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Passband {
    pub peak_index: usize,
    pub peak_db: f64,
    /// Inclusive grid-index range where the response is within 3 dB of the peak.
    pub first: usize,
    pub last: usize,
    /// Interpolated band edges.
    pub lower_edge: f64,
    pub upper_edge: f64,
}

impl Passband {
    pub fn bandwidth(&self) -> f64 {
        self.upper_edge - self.lower_edge
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.lower_edge + self.upper_edge)
    }
}

/// Locates the peak and its contiguous 3 dB band. Ties on the maximum are
/// resolved toward the grid center. Tied maxima outside that band (two
/// separate equal peaks) are an error unless the response is a mirror image
/// about the grid center, in which case the lobes are interchangeable and the
/// lower one is used. A peak on the grid boundary is an error.
pub fn passband(freq: &[f64], db: &[f64]) -> Result<Passband> {
    let n = db.len();
    if n < 3 || freq.len() != n {
        return Err(Error::Metric(format!("response needs at least 3 matching samples, got {n}")));
    }
    if let Some(k) = db.iter().position(|v| v.is_nan()) {
        return Err(Error::Metric(format!("NaN response at {} GHz", freq[k])));
    }
    let max = db.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let tied: Vec<usize> = (0..n).filter(|&k| db[k] >= max - PEAK_TIE_DB).collect();
    let mid = (n - 1) as f64 / 2.0;
    let peak = *tied
        .iter()
        .min_by(|&&a, &&b| (a as f64 - mid).abs().total_cmp(&(b as f64 - mid).abs()).then(a.cmp(&b)))
        .expect("at least one sample attains the maximum");
    let level = max - 3.0;
    let mut first = peak;
    while first > 0 && db[first - 1] >= level {
        first -= 1;
    }
    let mut last = peak;
    while last + 1 < n && db[last + 1] >= level {
        last += 1;
    }
    if tied.iter().any(|&k| k < first || k > last) && !is_mirror_symmetric(freq, db) {
        return Err(Error::Metric("two separate equal peaks: main lobe is ambiguous".into()));
    }
    if peak == 0 || peak == n - 1 {
        return Err(Error::Metric("peak lies on the grid boundary".into()));
    }
    let crossing = |inside: usize, outside: usize| {
        let t = (level - db[inside]) / (db[outside] - db[inside]);
        freq[inside] + t * (freq[outside] - freq[inside])
    };
    let lower_edge = if first == 0 { freq[0] } else { crossing(first, first - 1) };
    let upper_edge = if last == n - 1 { freq[n - 1] } else { crossing(last, last + 1) };
    Ok(Passband {
        peak_index: peak,
        peak_db: max,
        first,
        last,
        lower_edge,
        upper_edge,
    })
}

fn is_mirror_symmetric(freq: &[f64], db: &[f64]) -> bool {
    let n = db.len();
    let step = (freq[n - 1] - freq[0]) / (n - 1) as f64;
    (0..n / 2).all(|k| {
        (freq[k] + freq[n - 1 - k] - freq[0] - freq[n - 1]).abs() <= 1e-9 * step
            && (db[k] - db[n - 1 - k]).abs() <= PEAK_TIE_DB
    })
}

pub fn bandwidth_3db(freq: &[f64], db: &[f64]) -> Result<f64> {
    Ok(passband(freq, db)?.bandwidth())
}

/// Refines a discrete local maximum by fitting a parabola to inverse power at
/// the three samples around it, which is exact for a Lorentzian line.
/// Returns the refined (frequency, dB).
fn refined_max(freq: &[f64], db: &[f64], k: usize) -> (f64, f64) {
    if k == 0 || k + 1 >= db.len() {
        return (freq[k], db[k]);
    }
    let inv = |v: f64| 10f64.powf(-v / 10.0);
    let (a, b, c) = (inv(db[k - 1]), inv(db[k]), inv(db[k + 1]));
    let curvature = a - 2.0 * b + c;
    if !(curvature > 0.0) || b > a || b > c {
        return (freq[k], db[k]);
    }
    let shift = 0.5 * (a - c) / curvature;
    let vertex = b - (c - a).powi(2) / (8.0 * curvature);
    if vertex <= 0.0 {
        return (freq[k], db[k]);
    }
    let f = freq[k] + shift * (freq[k + 1] - freq[k - 1]) / 2.0;
    (f, db[k].max(-10.0 * vertex.log10()))
}

/// Largest dB over `|f - f_peak| >= span/4`, including the linearly
/// interpolated value at each stopband edge.
fn stopband_max(freq: &[f64], db: &[f64], peak_freq: f64) -> Result<f64> {
    let n = freq.len();
    let span = freq[n - 1] - freq[0];
    let reach = 0.25 * span;
    let inside = |k: usize| (freq[k] - peak_freq).abs() >= reach;
    let mut stop = f64::NEG_INFINITY;
    for k in (0..n).filter(|&k| inside(k)) {
        let interior = k > 0 && k + 1 < n && inside(k - 1) && inside(k + 1);
        stop = stop.max(if interior { refined_max(freq, db, k).1 } else { db[k] });
    }
    for edge in [peak_freq - reach, peak_freq + reach] {
        if edge <= freq[0] || edge >= freq[n - 1] {
            continue;
        }
        let k = freq.partition_point(|f| *f <= edge) - 1;
        let t = (edge - freq[k]) / (freq[k + 1] - freq[k]);
        stop = stop.max(db[k] + t * (db[k + 1] - db[k]));
    }
    if stop == f64::NEG_INFINITY {
        return Err(Error::Metric("empty stopband".into()));
    }
    Ok(stop)
}

/// Peak dB minus the largest stopband dB, with sampled local maxima refined.
pub fn extinction_ratio(freq: &[f64], db: &[f64]) -> Result<f64> {
    let band = passband(freq, db)?;
    let (f_peak, peak) = refined_max(freq, db, band.peak_index);
    Ok(peak - stopband_max(freq, db, f_peak)?)
}

/// Standard deviation of the dB response over `|f - f_c| <= BW/4`, where
/// `f_c` is the band midpoint, treating the response as piecewise linear
/// between grid samples.
pub fn roughness(freq: &[f64], db: &[f64]) -> Result<f64> {
    let band = passband(freq, db)?;
    let (lo, hi) = (band.center() - 0.25 * band.bandwidth(), band.center() + 0.25 * band.bandwidth());
    if !(hi > lo) {
        return Err(Error::Metric("empty passband".into()));
    }
    let (mut s1, mut s2) = (0.0, 0.0);
    for k in 0..freq.len() - 1 {
        let (f0, f1) = (freq[k], freq[k + 1]);
        let (a, b) = (f0.max(lo), f1.min(hi));
        if b <= a {
            continue;
        }
        let at = |f: f64| db[k] + (db[k + 1] - db[k]) * (f - f0) / (f1 - f0);
        let (ya, yb) = (at(a), at(b));
        s1 += 0.5 * (b - a) * (ya + yb);
        s2 += (b - a) * (ya * ya + ya * yb + yb * yb) / 3.0;
    }
    let mean = s1 / (hi - lo);
    Ok((s2 / (hi - lo) - mean * mean).max(0.0).sqrt())
}

/// Largest stopband dB of the cross port, with sampled local maxima refined.
pub fn crosstalk(freq: &[f64], db: &[f64]) -> Result<f64> {
    let band = passband(freq, db)?;
    stopband_max(freq, db, refined_max(freq, db, band.peak_index).0)
}

/// Loss of the cross-port peak, `-peak_db`.
pub fn attenuation(db: &[f64]) -> Result<f64> {
    let max = db.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::Metric("empty or non-finite response".into()));
    }
    Ok(-max)
}
