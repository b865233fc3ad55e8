//! Trajectory validation and the 10-channel derived feature series.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One timestamped position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
}

impl Sample {
    pub fn new(t: f64, x: f64, y: f64) -> Self {
        Sample { t, x, y }
    }

    fn is_finite(&self) -> bool {
        self.t.is_finite() && self.x.is_finite() && self.y.is_finite()
    }
}

/// Timestamped (x, y) sequence for one navigator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawTrajectory {
    pub id: String,
    pub samples: Vec<Sample>,
}

impl RawTrajectory {
    pub fn new(id: impl Into<String>, samples: Vec<Sample>) -> Self {
        RawTrajectory { id: id.into(), samples }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Time steps between consecutive samples.
    pub fn time_steps(&self) -> Vec<f64> {
        self.samples.windows(2).map(|w| w[1].t - w[0].t).collect()
    }
}

/// Drops non-finite rows and repeated timestamps.
///
/// A timestamp that goes backwards cannot be repaired and is reported as
/// [`Error::NonMonotonicTime`].
pub fn validate_trajectory(raw: RawTrajectory) -> Result<RawTrajectory> {
    let RawTrajectory { id, samples } = raw;
    let mut kept: Vec<Sample> = Vec::with_capacity(samples.len());
    for (index, s) in samples.into_iter().enumerate() {
        if !s.is_finite() {
            continue;
        }
        if let Some(prev) = kept.last() {
            if s.t == prev.t {
                continue;
            }
            if s.t < prev.t {
                return Err(Error::NonMonotonicTime { id, index });
            }
        }
        kept.push(s);
    }
    if kept.len() < 3 {
        return Err(Error::TooShort { id, len: kept.len() });
    }
    Ok(RawTrajectory { id, samples: kept })
}

/// Derivative of `series` with respect to time.
///
/// Interior points use the central difference over the two adjacent steps,
/// endpoints use one-sided differences. The output has the input's length.
pub fn finite_difference(series: &[f64], dt: &[f64]) -> Result<Vec<f64>> {
    let n = series.len();
    if n < 2 {
        return Err(Error::LengthMismatch { expected: 2, actual: n });
    }
    if dt.len() != n - 1 {
        return Err(Error::LengthMismatch {
            expected: n - 1,
            actual: dt.len(),
        });
    }
    if let Some((index, &bad)) = dt.iter().enumerate().find(|(_, &d)| !(d > 0.0)) {
        return Err(Error::NonPositiveStep { index, dt: bad });
    }
    let mut out = Vec::with_capacity(n);
    out.push((series[1] - series[0]) / dt[0]);
    for i in 1..n - 1 {
        out.push((series[i + 1] - series[i - 1]) / (dt[i - 1] + dt[i]));
    }
    out.push((series[n - 1] - series[n - 2]) / dt[n - 2]);
    Ok(out)
}

/// Maps an angle into (−π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

/// How the direction channel θ is derived.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DirectionMode {
    /// Heading of motion, `atan2(∇y, ∇x)`.
    #[default]
    Heading,
    /// Bearing of the raw position, `atan2(x, y)`.
    PositionBearing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    /// Centered window length for the local entropy and variance of ∇θ.
    pub window: usize,
    /// Histogram bins over (−π, π] for the entropy estimate.
    pub entropy_bins: usize,
    pub direction_mode: DirectionMode,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            window: 9,
            entropy_bins: 16,
            direction_mode: DirectionMode::Heading,
        }
    }
}

/// Index of each channel in a [`FeatureSeries`].
pub mod channel {
    pub const X: usize = 0;
    pub const Y: usize = 1;
    pub const SPEED: usize = 2;
    pub const ACCEL: usize = 3;
    pub const DX: usize = 4;
    pub const DY: usize = 5;
    pub const THETA: usize = 6;
    pub const DTHETA: usize = 7;
    pub const ENTROPY: usize = 8;
    pub const VARIANCE: usize = 9;
}

pub const FEATURE_CHANNELS: usize = 10;

/// 10×N derived signal, stored channel-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSeries {
    len: usize,
    values: Vec<f64>,
}

impl FeatureSeries {
    pub fn from_channels(channels: [Vec<f64>; FEATURE_CHANNELS]) -> Result<Self> {
        let len = channels[0].len();
        let mut values = Vec::with_capacity(len * FEATURE_CHANNELS);
        for c in &channels {
            if c.len() != len {
                return Err(Error::LengthMismatch {
                    expected: len,
                    actual: c.len(),
                });
            }
            values.extend_from_slice(c);
        }
        Ok(FeatureSeries { len, values })
    }

    /// Number of time steps N.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.values[c * self.len..(c + 1) * self.len]
    }

    /// Channel-major values, `values[c * N + t]`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Derives the 10-channel series `[x, y, s, ∇s, ∇x, ∇y, θ, ∇θ, entropy, variance]`.
///
/// Positional derivatives are per second. ∇θ is the turn per sample step in
/// radians: the wrapped heading increments pass through the same stencil with
/// unit spacing, so it stays inside (−π, π] where the entropy histogram lives.
pub fn compute_feature_series(raw: &RawTrajectory, cfg: &FeatureConfig) -> Result<FeatureSeries> {
    let raw = validate_trajectory(raw.clone())?;
    let n = raw.len();
    let dt = raw.time_steps();
    let xs: Vec<f64> = raw.samples.iter().map(|s| s.x).collect();
    let ys: Vec<f64> = raw.samples.iter().map(|s| s.y).collect();

    let dx = finite_difference(&xs, &dt)?;
    let dy = finite_difference(&ys, &dt)?;
    let speed: Vec<f64> = dx.iter().zip(&dy).map(|(a, b)| a.hypot(*b)).collect();
    let accel = finite_difference(&speed, &dt)?;

    let theta: Vec<f64> = match cfg.direction_mode {
        DirectionMode::Heading => dx.iter().zip(&dy).map(|(a, b)| b.atan2(*a)).collect(),
        DirectionMode::PositionBearing => xs.iter().zip(&ys).map(|(x, y)| x.atan2(*y)).collect(),
    };
    let dtheta = turn_per_step(&theta);
    let (entropy, variance) = local_statistics(&dtheta, cfg.window.max(1), cfg.entropy_bins.max(1));

    debug_assert_eq!(entropy.len(), n);
    FeatureSeries::from_channels([xs, ys, speed, accel, dx, dy, theta, dtheta, entropy, variance])
}

fn turn_per_step(theta: &[f64]) -> Vec<f64> {
    let n = theta.len();
    let inc: Vec<f64> = theta.windows(2).map(|w| wrap_angle(w[1] - w[0])).collect();
    let mut out = Vec::with_capacity(n);
    out.push(inc[0]);
    for i in 1..n - 1 {
        out.push(0.5 * (inc[i - 1] + inc[i]));
    }
    out.push(inc[n - 2]);
    out
}

/// Bin of an angle in (−π, π] split into `bins` half-open intervals `(a, b]`.
fn angle_bin(v: f64, bins: usize) -> usize {
    let width = 2.0 * PI / bins as f64;
    let pos = ((v + PI) / width).ceil() as isize - 1;
    pos.clamp(0, bins as isize - 1) as usize
}

/// Shannon entropy (nats) and population variance over a centered window
/// that shrinks at the series boundaries.
fn local_statistics(values: &[f64], window: usize, bins: usize) -> (Vec<f64>, Vec<f64>) {
    let n = values.len();
    let half = window / 2;
    let mut entropy = Vec::with_capacity(n);
    let mut variance = Vec::with_capacity(n);
    let mut hist = vec![0usize; bins];
    for i in 0..n {
        let lo = i.saturating_sub(half);
        let hi = (i + half).min(n - 1);
        let win = &values[lo..=hi];
        let count = win.len() as f64;

        hist.iter_mut().for_each(|h| *h = 0);
        for &v in win {
            hist[angle_bin(v, bins)] += 1;
        }
        let h: f64 = hist
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / count;
                -p * p.ln()
            })
            .sum();
        entropy.push(h.max(0.0));

        let mean = win.iter().sum::<f64>() / count;
        let var = win.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / count;
        variance.push(var.max(0.0));
    }
    (entropy, variance)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize, dt: f64, vx: f64, vy: f64) -> RawTrajectory {
        let samples = (0..n)
            .map(|i| {
                let t = i as f64 * dt;
                Sample::new(t, vx * i as f64, vy * i as f64)
            })
            .collect();
        RawTrajectory::new("line", samples)
    }

    #[test]
    fn validate_keeps_clean_samples() {
        let raw = line(5, 0.5, 1.0, 0.0);
        assert_eq!(validate_trajectory(raw.clone()).unwrap(), raw);
    }

    #[test]
    fn validate_drops_nan_row() {
        let mut raw = line(5, 0.5, 1.0, 0.0);
        raw.samples[2].x = f64::NAN;
        let v = validate_trajectory(raw).unwrap();
        assert_eq!(v.len(), 4);
        assert!(v.samples.iter().all(|s| s.x.is_finite()));
    }

    #[test]
    fn validate_rejects_short_and_backwards() {
        let raw = line(2, 0.5, 1.0, 0.0);
        assert!(matches!(validate_trajectory(raw), Err(Error::TooShort { len: 2, .. })));

        let mut raw = line(5, 0.5, 1.0, 0.0);
        raw.samples[3].t = 0.1;
        assert!(matches!(validate_trajectory(raw), Err(Error::NonMonotonicTime { index: 3, .. })));
    }

    #[test]
    fn validate_drops_repeated_timestamps() {
        let mut raw = line(5, 0.5, 1.0, 0.0);
        raw.samples[2].t = raw.samples[1].t;
        assert_eq!(validate_trajectory(raw).unwrap().len(), 4);
    }

    #[test]
    fn finite_difference_stencils() {
        assert_eq!(finite_difference(&[0., 1., 2., 3.], &[1., 1., 1.]).unwrap(), vec![1.; 4]);
        assert_eq!(finite_difference(&[5., 5., 5.], &[0.5, 0.5]).unwrap(), vec![0.; 3]);
        assert_eq!(finite_difference(&[0., 1., 4.], &[1., 1.]).unwrap(), vec![1., 2., 3.]);
        assert!(matches!(finite_difference(&[0., 1., 4.], &[1.]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn uniform_motion_features() {
        let f = compute_feature_series(&line(20, 0.5, 1.0, 0.0), &FeatureConfig::default()).unwrap();
        assert_eq!(f.len(), 20);
        for t in 0..20 {
            assert!((f.channel(channel::SPEED)[t] - 2.0).abs() < 1e-12);
            assert_eq!(f.channel(channel::ACCEL)[t], 0.0);
            assert_eq!(f.channel(channel::THETA)[t], 0.0);
            assert_eq!(f.channel(channel::DTHETA)[t], 0.0);
            assert_eq!(f.channel(channel::ENTROPY)[t], 0.0);
            assert_eq!(f.channel(channel::VARIANCE)[t], 0.0);
        }
    }

    #[test]
    fn motion_along_y_heads_north() {
        let f = compute_feature_series(&line(6, 0.5, 0.0, 1.0), &FeatureConfig::default()).unwrap();
        assert!(f.channel(channel::THETA).iter().all(|&t| (t - PI / 2.0).abs() < 1e-15));
    }

    #[test]
    fn octagon_has_constant_turn() {
        // unit edges, one vertex per sample at 2 Hz, three laps
        let n = 25;
        let samples = (0..n)
            .scan((0.0f64, 0.0f64), |pos, i| {
                let out = Sample::new(i as f64 * 0.5, pos.0, pos.1);
                let heading = i as f64 * PI / 4.0;
                pos.0 += heading.cos();
                pos.1 += heading.sin();
                Some(out)
            })
            .collect();
        let f = compute_feature_series(&RawTrajectory::new("oct", samples), &FeatureConfig::default()).unwrap();
        let dtheta = f.channel(channel::DTHETA);
        for (t, d) in dtheta.iter().enumerate().take(n - 2).skip(2) {
            assert!((d - PI / 4.0).abs() < 1e-12, "t={t} {d}");
        }
        // windows of half-width 4 that avoid the endpoint stencils
        for t in 6..n - 6 {
            assert!(f.channel(channel::VARIANCE)[t] < 1e-20);
        }
    }

    #[test]
    fn position_bearing_mode_uses_raw_position() {
        let cfg = FeatureConfig {
            direction_mode: DirectionMode::PositionBearing,
            ..FeatureConfig::default()
        };
        let f = compute_feature_series(&line(4, 1.0, 1.0, 1.0), &cfg).unwrap();
        assert_eq!(f.channel(channel::THETA)[0], 0.0f64.atan2(0.0));
        assert!((f.channel(channel::THETA)[2] - PI / 4.0).abs() < 1e-15);
    }

    #[test]
    fn angle_bins_cover_half_open_interval() {
        assert_eq!(angle_bin(PI, 16), 15);
        assert_eq!(angle_bin(-PI, 16), 0);
        assert_eq!(angle_bin(0.0, 16), 7);
        assert_eq!(angle_bin(1e-9, 16), 8);
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-12);
    }

    #[test]
    fn entropy_of_two_equal_bins_is_ln2() {
        let (h, v) = local_statistics(&[-1.0, 1.0], 9, 16);
        assert!((h[0] - 2f64.ln()).abs() < 1e-15);
        assert!((v[0] - 1.0).abs() < 1e-15);
    }
}
