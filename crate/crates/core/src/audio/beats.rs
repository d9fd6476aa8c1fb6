use super::AudioError;

pub const TEMPO_MIN_BPM: f64 = 60.0;
pub const TEMPO_MAX_BPM: f64 = 180.0;
const PREFERRED_BPM: f64 = 120.0;
/// Penalty weight on log deviation of inter-beat intervals from the period.
const TIGHTNESS: f64 = 100.0;
/// Octave candidates scoring within this fraction of the best are resolved
/// toward `PREFERRED_BPM`.
const OCTAVE_TOLERANCE: f64 = 0.9;

#[derive(Debug, Clone, PartialEq)]
pub struct BeatEstimate {
    /// Strictly increasing beat frame indices.
    pub beats: Vec<usize>,
    /// `None` when no tempo could be estimated (e.g. an all-zero envelope).
    pub tempo_bpm: Option<f64>,
}

/// Normalized autocorrelation of a mean-removed series.
fn autocorrelation(x: &[f64], max_lag: usize) -> Vec<f64> {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let c: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let var = c.iter().map(|v| v * v).sum::<f64>() / n as f64;
    (0..=max_lag)
        .map(|lag| {
            let s: f64 = c[..n - lag].iter().zip(&c[lag..]).map(|(a, b)| a * b).sum();
            if var > 0.0 { s / ((n - lag) as f64 * var) } else { 0.0 }
        })
        .collect()
}

fn interp(acf: &[f64], lag: f64) -> f64 {
    if lag <= 0.0 {
        return acf[0];
    }
    let i = lag.floor() as usize;
    if i + 1 >= acf.len() {
        return *acf.last().unwrap();
    }
    let f = lag - i as f64;
    acf[i] * (1.0 - f) + acf[i + 1] * f
}

/// Estimated beat period in frames.
fn estimate_period(env: &[f64], fps: usize) -> f64 {
    let min_lag = (fps as f64 * 60.0 / TEMPO_MAX_BPM).ceil() as usize;
    let max_lag = (fps as f64 * 60.0 / TEMPO_MIN_BPM).floor() as usize;
    let acf_len = (env.len() / 2).max(max_lag + 2).min(env.len() - 1);
    let acf = autocorrelation(env, acf_len);

    // Correlation at the period minus correlation at half the period: a
    // pulse train at period P scores high at P but ~0 at 2P, whose midpoint
    // also lands on pulses.
    let score = |lag: usize| interp(&acf, lag as f64) - interp(&acf, lag as f64 / 2.0).max(0.0);
    let scored: Vec<(usize, f64)> = (min_lag..=max_lag).map(|l| (l, score(l))).collect();
    let best = scored.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    let bpm = |lag: f64| fps as f64 * 60.0 / lag;
    let lag = scored
        .iter()
        .filter(|(l, s)| *s >= OCTAVE_TOLERANCE * best && is_local_max(&scored, *l))
        .min_by(|a, b| {
            let da = (bpm(a.0 as f64) / PREFERRED_BPM).log2().abs();
            let db = (bpm(b.0 as f64) / PREFERRED_BPM).log2().abs();
            da.total_cmp(&db)
        })
        .map(|s| s.0)
        .unwrap_or(scored.iter().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap().0);

    // Sub-frame refinement: comb over the available multiples of the period.
    let multiples = |p: f64| ((acf.len() - 1) as f64 / p).floor().max(1.0) as usize;
    let comb = |p: f64| (1..=multiples(p)).map(|m| interp(&acf, m as f64 * p)).sum::<f64>() / multiples(p) as f64;
    let mut best_p = lag as f64;
    let mut best_c = comb(best_p);
    let steps = 100;
    for i in 0..=steps {
        let p = lag as f64 - 1.0 + 2.0 * i as f64 / steps as f64;
        let c = comb(p);
        if c > best_c + 1e-12 {
            best_c = c;
            best_p = p;
        }
    }
    best_p
}

fn is_local_max(scored: &[(usize, f64)], lag: usize) -> bool {
    let i = scored.iter().position(|s| s.0 == lag).unwrap();
    let v = scored[i].1;
    (i == 0 || scored[i - 1].1 <= v) && (i + 1 == scored.len() || scored[i + 1].1 <= v)
}

/// Dynamic-programming beat alignment of the envelope to a fixed period.
fn track_beats(env: &[f64], period: f64) -> Vec<usize> {
    let n = env.len();
    let mean = env.iter().sum::<f64>() / n as f64;
    let std = (env.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    let local: Vec<f64> = env.iter().map(|v| v / std.max(1e-12)).collect();

    let lo = (period / 2.0).round() as usize;
    let hi = (2.0 * period).round() as usize;
    let mut cum = vec![0.0; n];
    let mut back = vec![usize::MAX; n];
    for t in 0..n {
        let mut best = f64::NEG_INFINITY;
        let mut arg = usize::MAX;
        if t >= lo {
            let first = t.saturating_sub(hi);
            for tau in first..=t - lo {
                let dev = ((t - tau) as f64 / period).ln();
                let s = cum[tau] - TIGHTNESS * dev * dev;
                if s > best {
                    best = s;
                    arg = tau;
                }
            }
        }
        if arg != usize::MAX && best > 0.0 {
            cum[t] = local[t] + best;
            back[t] = arg;
        } else {
            cum[t] = local[t];
        }
    }

    let tail = n.saturating_sub(period.round() as usize);
    let mut t = (tail..n).max_by(|&a, &b| cum[a].total_cmp(&cum[b]).then(b.cmp(&a))).unwrap();
    let mut beats = vec![t];
    while back[t] != usize::MAX {
        t = back[t];
        beats.push(t);
    }
    beats.reverse();

    // Drop leading/trailing beats that sit on silence.
    let strength = |b: usize| env[b.saturating_sub(2)..(b + 3).min(n)].iter().cloned().fold(0.0, f64::max);
    let strongest = beats.iter().map(|&b| strength(b)).fold(0.0, f64::max);
    let keep = |b: &usize| strength(*b) >= 0.1 * strongest;
    let first = beats.iter().position(keep);
    let last = beats.iter().rposition(keep);
    match (first, last) {
        (Some(f), Some(l)) => beats[f..=l].to_vec(),
        _ => Vec::new(),
    }
}

/// Tempo (60–180 BPM) from envelope autocorrelation and beats from dynamic
/// programming against that tempo.
pub fn detect_beats(envelope: &[f64], fps: usize) -> Result<BeatEstimate, AudioError> {
    let needed = 4 * fps;
    if envelope.len() < needed {
        return Err(AudioError::EnvelopeTooShort { frames: envelope.len(), needed });
    }
    if envelope.iter().all(|&v| v <= 0.0) {
        return Ok(BeatEstimate { beats: Vec::new(), tempo_bpm: None });
    }
    let period = estimate_period(envelope, fps);
    let beats = track_beats(envelope, period);
    Ok(BeatEstimate { beats, tempo_bpm: Some(fps as f64 * 60.0 / period) })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakConfig {
    /// Threshold is `mean + k * std` of the envelope.
    pub k: f64,
    /// Minimum distance in frames between two reported peaks.
    pub min_gap: usize,
}

impl Default for PeakConfig {
    fn default() -> Self {
        Self { k: 1.0, min_gap: 6 }
    }
}

/// Strict local maxima above `mean + k·std`, greedily keeping the highest
/// peaks at least `min_gap` frames apart.
pub fn detect_peaks(envelope: &[f64], cfg: &PeakConfig) -> Vec<usize> {
    let n = envelope.len();
    if n < 3 {
        return Vec::new();
    }
    let mean = envelope.iter().sum::<f64>() / n as f64;
    let std = (envelope.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    let threshold = mean + cfg.k * std;
    let mut cands: Vec<usize> = (1..n - 1)
        .filter(|&i| envelope[i] > envelope[i - 1] && envelope[i] > envelope[i + 1] && envelope[i] > threshold)
        .collect();
    cands.sort_by(|&a, &b| envelope[b].total_cmp(&envelope[a]).then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::new();
    for c in cands {
        if kept.iter().all(|&k| k.abs_diff(c) >= cfg.min_gap) {
            kept.push(c);
        }
    }
    kept.sort_unstable();
    kept
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Envelope with unit pulses (one frame wide) at a given tempo.
    fn pulse_env(bpm: f64, secs: f64, offset: f64) -> (Vec<f64>, Vec<usize>) {
        let n = (secs * 60.0) as usize;
        let period = 3600.0 / bpm;
        let mut env = vec![0.0; n];
        let mut truth = Vec::new();
        let mut t = offset;
        while (t.round() as usize) < n {
            let i = t.round() as usize;
            env[i] = 1.0;
            if i + 1 < n {
                env[i + 1] = 0.4;
            }
            truth.push(i);
            t += period;
        }
        (env, truth)
    }

    #[test]
    fn pulse_train_tempo_and_beats() {
        for &(bpm, lo, hi) in &[(120.0, 118.0, 122.0), (90.0, 88.0, 92.0), (175.0, 173.0, 177.0), (63.0, 61.0, 65.0)] {
            let (env, truth) = pulse_env(bpm, 20.0, 7.0);
            let est = detect_beats(&env, 60).unwrap();
            let tempo = est.tempo_bpm.unwrap();
            assert!(tempo >= lo && tempo <= hi, "{bpm}: estimated {tempo}");
            for b in &truth {
                assert!(est.beats.iter().any(|e| e.abs_diff(*b) <= 2), "{bpm}: missing beat at {b}: {:?}", est.beats);
            }
        }
    }

    #[test]
    fn zero_envelope_has_no_beats() {
        let est = detect_beats(&vec![0.0; 600], 60).unwrap();
        assert!(est.beats.is_empty());
        assert!(est.tempo_bpm.is_none());
    }

    #[test]
    fn short_envelope_rejected() {
        assert!(matches!(detect_beats(&[0.0; 100], 60), Err(AudioError::EnvelopeTooShort { .. })));
    }

    #[test]
    fn triangular_bump_single_peak() {
        let mut e = vec![0.0; 40];
        for i in 0..9 {
            e[15 + i] = 1.0 - (i as f64 - 4.0).abs() / 5.0;
        }
        assert_eq!(detect_peaks(&e, &PeakConfig::default()), vec![19]);
    }

    #[test]
    fn close_bumps_keep_higher() {
        let mut e = vec![0.0; 40];
        e[20] = 0.8;
        e[23] = 1.0;
        assert_eq!(detect_peaks(&e, &PeakConfig { k: 1.0, min_gap: 6 }), vec![23]);
    }

    #[test]
    fn ramp_has_no_peaks() {
        let e: Vec<f64> = (0..50).map(|i| i as f64).collect();
        assert!(detect_peaks(&e, &PeakConfig::default()).is_empty());
    }
}
