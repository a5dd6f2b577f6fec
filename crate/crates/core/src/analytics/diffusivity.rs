use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::PathPoint;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiffusivityParams {
    /// Start times are taken from the first `window_seconds` of the track.
    pub window_seconds: f64,
    /// Largest lag evaluated; the curve plateaus by about one second.
    pub max_lag_seconds: f64,
}

impl Default for DiffusivityParams {
    fn default() -> Self {
        Self {
            window_seconds: 2.5,
            max_lag_seconds: 1.0,
        }
    }
}

/// `D(τ)` samples in µm²/s at lags that are whole frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusivityCurve {
    /// Lags in seconds, strictly increasing.
    pub lags: Vec<f64>,
    pub values: Vec<f64>,
    pub peak: f64,
}

impl DiffusivityCurve {
    /// Mean of the values at lags of at least `from_seconds`.
    pub fn plateau(&self, from_seconds: f64) -> Option<f64> {
        let tail: Vec<f64> = self
            .lags
            .iter()
            .zip(&self.values)
            .filter(|(l, _)| **l >= from_seconds)
            .map(|(_, v)| *v)
            .collect();
        (!tail.is_empty()).then(|| tail.iter().sum::<f64>() / tail.len() as f64)
    }
}

/// 2-D diffusivity curve of one path. For each lag of `k` frames,
/// `D = mean[(Δx² + Δy²)] / (4τ)` over start frames within the first
/// `window_seconds` that have a sample `k` frames later. Lags without any
/// such pair are omitted.
pub fn diffusivity_curve(
    points: &[PathPoint],
    fps: f64,
    pixel_scale: f64,
    params: &DiffusivityParams,
) -> Result<DiffusivityCurve> {
    if points.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "diffusivity needs at least 2 samples, got {}",
            points.len()
        )));
    }
    if !(fps > 0.0 && pixel_scale > 0.0) {
        return Err(Error::InvalidInput("fps and pixel scale must be positive".into()));
    }
    if points.windows(2).any(|w| w[1].frame <= w[0].frame) {
        return Err(Error::InvalidInput("path frames must be strictly increasing".into()));
    }
    let first = points[0].frame;
    let span = points[points.len() - 1].frame - first;
    let mut dense: Vec<Option<(f64, f64)>> = vec![None; span + 1];
    for p in points {
        dense[p.frame - first] = Some((p.x * pixel_scale, p.y * pixel_scale));
    }
    let max_lag = span.min((params.max_lag_seconds * fps + 1e-9).floor() as usize);
    let max_start = (params.window_seconds * fps + 1e-9).floor() as usize;

    let mut lags = Vec::new();
    let mut values = Vec::new();
    for k in 1..=max_lag {
        let tau = k as f64 / fps;
        let (mut sum, mut n) = (0.0, 0usize);
        for j in 0..=max_start.min(span - k) {
            if let (Some(a), Some(b)) = (dense[j], dense[j + k]) {
                sum += (b.0 - a.0).powi(2) + (b.1 - a.1).powi(2);
                n += 1;
            }
        }
        if n > 0 {
            lags.push(tau);
            values.push(sum / n as f64 / (4.0 * tau));
        }
    }
    if values.is_empty() {
        return Err(Error::InvalidInput("no lag has a complete sample pair".into()));
    }
    let peak = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(DiffusivityCurve { lags, values, peak })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MotilityClass {
    #[serde(rename = "none")]
    Immotile,
    Low,
    Medium,
    High,
}

impl MotilityClass {
    pub const ALL: [MotilityClass; 4] = [
        MotilityClass::Immotile,
        MotilityClass::Low,
        MotilityClass::Medium,
        MotilityClass::High,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            MotilityClass::Immotile => "none",
            MotilityClass::Low => "low",
            MotilityClass::Medium => "medium",
            MotilityClass::High => "high",
        }
    }
}

impl fmt::Display for MotilityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Upper bounds (inclusive, µm²/s) on peak diffusivity for the lower three classes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotilityThresholds {
    pub none: f64,
    pub low: f64,
    pub medium: f64,
}

impl Default for MotilityThresholds {
    fn default() -> Self {
        Self {
            none: 0.075,
            low: 0.25,
            medium: 1.0,
        }
    }
}

impl MotilityThresholds {
    pub fn classify(&self, peak: f64) -> MotilityClass {
        if peak <= self.none {
            MotilityClass::Immotile
        } else if peak <= self.low {
            MotilityClass::Low
        } else if peak <= self.medium {
            MotilityClass::Medium
        } else {
            MotilityClass::High
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.none && self.none <= self.low && self.low <= self.medium) {
            return Err(Error::Config("motility thresholds must be nondecreasing and nonnegative".into()));
        }
        Ok(())
    }
}

pub fn classify_motility(curve: &DiffusivityCurve, thresholds: &MotilityThresholds) -> MotilityClass {
    thresholds.classify(curve.peak)
}

/// Path length over consecutive samples divided by elapsed time, µm/s.
pub fn mean_speed(points: &[PathPoint], fps: f64, pixel_scale: f64) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::InvalidInput("speed needs at least 2 samples".into()));
    }
    let elapsed = points[points.len() - 1].frame.saturating_sub(points[0].frame);
    if elapsed == 0 {
        return Err(Error::InvalidInput("samples span no time".into()));
    }
    let length: f64 = points
        .windows(2)
        .map(|w| (w[1].x - w[0].x).hypot(w[1].y - w[0].y))
        .sum();
    Ok(length * pixel_scale * fps / elapsed as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn line(n: usize, vx: f64, vy: f64) -> Vec<PathPoint> {
        (0..n).map(|t| PathPoint::new(t, 10.0 + vx * t as f64, 20.0 + vy * t as f64)).collect()
    }

    #[test]
    fn stationary_is_zero() {
        let pts = line(100, 0.0, 0.0);
        let c = diffusivity_curve(&pts, 60.0, 0.5, &DiffusivityParams::default()).unwrap();
        assert_eq!(c.lags.len(), 60);
        assert!(c.values.iter().all(|&v| v == 0.0));
        assert_eq!(c.peak, 0.0);
    }

    #[test]
    fn ballistic_is_linear_in_lag() {
        // 1 px/frame at 60 fps and 0.5 µm/px = 30 µm/s
        let pts = line(300, 0.6, 0.8);
        let c = diffusivity_curve(&pts, 60.0, 0.5, &DiffusivityParams::default()).unwrap();
        for (tau, d) in c.lags.iter().zip(&c.values) {
            let expected = 30.0 * 30.0 * tau / 4.0;
            assert!((d - expected).abs() < 1e-9 * expected.max(1.0), "{tau}: {d} vs {expected}");
        }
        assert!((c.lags[59] - 1.0).abs() < 1e-12);
        assert_eq!(c.peak, *c.values.last().unwrap());
    }

    #[test]
    fn short_track_limits_lags() {
        let pts = line(5, 1.0, 0.0);
        let c = diffusivity_curve(&pts, 60.0, 1.0, &DiffusivityParams::default()).unwrap();
        assert_eq!(c.lags.len(), 4);
        assert!(diffusivity_curve(&pts[..1], 60.0, 1.0, &DiffusivityParams::default()).is_err());
    }

    #[test]
    fn gaps_skip_missing_pairs() {
        let pts = vec![PathPoint::new(0, 0.0, 0.0), PathPoint::new(2, 2.0, 0.0)];
        let params = DiffusivityParams {
            window_seconds: 2.5,
            max_lag_seconds: 2.0,
        };
        let c = diffusivity_curve(&pts, 1.0, 1.0, &params).unwrap();
        assert_eq!(c.lags, vec![2.0]);
        assert_eq!(c.values, vec![4.0 / 8.0]);
    }

    #[test]
    fn classification_bands() {
        let t = MotilityThresholds::default();
        assert_eq!(t.classify(0.05), MotilityClass::Immotile);
        assert_eq!(t.classify(0.075), MotilityClass::Immotile);
        assert_eq!(t.classify(0.2), MotilityClass::Low);
        assert_eq!(t.classify(0.5), MotilityClass::Medium);
        assert_eq!(t.classify(1.0), MotilityClass::Medium);
        assert_eq!(t.classify(2.0), MotilityClass::High);
    }

    #[test]
    fn speed_examples() {
        let pts = line(61, 1.0, 0.0);
        assert!((mean_speed(&pts, 60.0, 0.5).unwrap() - 30.0).abs() < 1e-12);
        assert_eq!(mean_speed(&line(10, 0.0, 0.0), 60.0, 0.5).unwrap(), 0.0);
        assert!(mean_speed(&pts[..1], 60.0, 0.5).is_err());
    }

    proptest! {
        #[test]
        fn curve_invariant_to_rigid_motion(
            steps in prop::collection::vec((-2.0..2.0f64, -2.0..2.0f64), 2..80),
            dx in -500.0..500.0f64, dy in -500.0..500.0f64, angle in 0.0..std::f64::consts::TAU,
        ) {
            let mut pts = vec![PathPoint::new(0, 0.0, 0.0)];
            for (k, (sx, sy)) in steps.iter().enumerate() {
                let last = pts[k];
                pts.push(PathPoint::new(k + 1, last.x + sx, last.y + sy));
            }
            let (s, c) = angle.sin_cos();
            let moved: Vec<PathPoint> = pts
                .iter()
                .map(|p| PathPoint::new(p.frame, c * p.x - s * p.y + dx, s * p.x + c * p.y + dy))
                .collect();
            let params = DiffusivityParams::default();
            let a = diffusivity_curve(&pts, 60.0, 0.5, &params).unwrap();
            let b = diffusivity_curve(&moved, 60.0, 0.5, &params).unwrap();
            prop_assert_eq!(&a.lags, &b.lags);
            for (x, y) in a.values.iter().zip(&b.values) {
                prop_assert!((x - y).abs() < 1e-9 * (1.0 + x.abs()));
            }
        }

        #[test]
        fn classification_monotone(a in 0.0..5.0f64, b in 0.0..5.0f64) {
            let t = MotilityThresholds::default();
            let (lo, hi) = (a.min(b), a.max(b));
            prop_assert!(t.classify(lo) <= t.classify(hi));
        }
    }
}
