use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KinematicBeatConfig {
    pub smooth_w: usize,
    /// Minimum prominence as a fraction of the smoothed series' range.
    pub prominence: f64,
}

impl Default for KinematicBeatConfig {
    fn default() -> Self {
        Self { smooth_w: 5, prominence: 0.05 }
    }
}

/// Centred moving average; windows are truncated at the ends.
pub fn moving_average(x: &[f64], w: usize) -> Vec<f64> {
    let w = w.max(1);
    let left = (w - 1) / 2;
    let right = w - 1 - left;
    (0..x.len())
        .map(|i| {
            let lo = i.saturating_sub(left);
            let hi = (i + right + 1).min(x.len());
            x[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

/// Depth of the minimum run `[a, b]` relative to the higher of the two
/// ridges separating it from lower ground (or the series ends).
fn prominence(s: &[f64], a: usize, b: usize) -> f64 {
    let v = s[a];
    let mut left = v;
    for i in (0..a).rev() {
        if s[i] < v {
            break;
        }
        left = left.max(s[i]);
    }
    let mut right = v;
    for &x in &s[b + 1..] {
        if x < v {
            break;
        }
        right = right.max(x);
    }
    left.min(right) - v
}

/// Frames where the smoothed velocity norm has a local minimum: a value (or
/// a flat run, reported at its middle) strictly below both neighbours, with
/// enough prominence.
pub fn kinematic_beats(velocity: &[f64], cfg: &KinematicBeatConfig) -> Vec<usize> {
    if velocity.len() < 3 {
        return Vec::new();
    }
    let s = moving_average(velocity, cfg.smooth_w);
    let (lo, hi) = s.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let range = hi - lo;
    if !(range > 0.0) {
        return Vec::new();
    }
    let threshold = cfg.prominence * range;
    let mut beats = Vec::new();
    let mut i = 1;
    while i + 1 < s.len() {
        if s[i] < s[i - 1] {
            let mut j = i;
            while j + 1 < s.len() && s[j + 1] == s[i] {
                j += 1;
            }
            if j + 1 < s.len() && s[j + 1] > s[i] && prominence(&s, i, j) >= threshold {
                beats.push((i + j) / 2);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    beats
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rectified_sine_minima_at_zero_crossings() {
        let period = 40.0;
        let v: Vec<f64> = (0..400).map(|t| (2.0 * std::f64::consts::PI * t as f64 / period).sin().abs()).collect();
        let b = kinematic_beats(&v, &KinematicBeatConfig::default());
        let expected: Vec<usize> = (1..20).map(|k| k * 20).collect();
        assert_eq!(b.len(), expected.len(), "{b:?}");
        for (a, e) in b.iter().zip(&expected) {
            assert!((*a as i64 - *e as i64).abs() <= 1);
        }
    }

    #[test]
    fn constant_series_has_no_beats() {
        assert!(kinematic_beats(&[0.7; 50], &KinematicBeatConfig::default()).is_empty());
    }

    #[test]
    fn single_v_shape() {
        let v: Vec<f64> = (0..41).map(|t| (t as f64 - 20.0).abs()).collect();
        assert_eq!(kinematic_beats(&v, &KinematicBeatConfig::default()), vec![20]);
    }

    #[test]
    fn shallow_dips_are_ignored() {
        let mut v: Vec<f64> = (0..60).map(|t| (t as f64 - 30.0).abs()).collect();
        v[10] -= 0.01;
        let cfg = KinematicBeatConfig { smooth_w: 1, prominence: 0.05 };
        assert_eq!(kinematic_beats(&v, &cfg), vec![30]);
    }
}
