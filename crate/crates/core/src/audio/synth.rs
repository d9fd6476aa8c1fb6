//! Built-in click and tone synthesizer so the pipeline can run without
//! external audio.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::PcmSignal;

const CLICK_SECS: f64 = 0.02;

fn add_click(buf: &mut [f64], at: usize, amp: f64, sr: u32) {
    let len = (CLICK_SECS * sr as f64) as usize;
    for i in 0..len {
        let Some(slot) = buf.get_mut(at + i) else { break };
        let t = i as f64 / sr as f64;
        let decay = (-t / 0.003).exp();
        let tone = (2.0 * std::f64::consts::PI * 1500.0 * t).sin() + 0.5 * (2.0 * std::f64::consts::PI * 3100.0 * t).sin();
        *slot += amp * decay * tone / 1.5;
    }
}

/// Full-scale clicks at the given sample positions.
pub fn click_signal(positions: &[usize], secs: f64, sample_rate: u32) -> PcmSignal {
    let mut buf = vec![0.0; (secs * sample_rate as f64) as usize];
    for &p in positions {
        add_click(&mut buf, p, 0.9, sample_rate);
    }
    PcmSignal::new(buf, sample_rate).expect("synthesized signal is valid")
}

/// Click track at a fixed tempo; returns the signal and the click onsets in
/// samples. The seed sets the phase of the first click and a low noise floor.
pub fn click_track(bpm: f64, secs: f64, sample_rate: u32, seed: u64) -> (PcmSignal, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = (secs * sample_rate as f64) as usize;
    let period = 60.0 / bpm * sample_rate as f64;
    let mut buf: Vec<f64> = (0..n).map(|_| rng.random_range(-0.003..0.003)).collect();
    let mut t = rng.random_range(0.05..0.5) * period;
    let mut clicks = Vec::new();
    while (t as usize) + 1 < n {
        let p = t as usize;
        add_click(&mut buf, p, 0.8 + rng.random_range(0.0..0.1), sample_rate);
        clicks.push(p);
        t += period;
    }
    (PcmSignal::new(buf, sample_rate).expect("synthesized signal is valid"), clicks)
}

/// Description of a generated tone track.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ToneTrackInfo {
    pub seed: u64,
    pub bpm: f64,
    pub secs: f64,
    pub sample_rate: u32,
    /// Beat onsets in samples.
    pub beat_samples: Vec<usize>,
}

/// Tone track: accented clicks on every beat, sporadic off-beat ticks and a
/// random melody of decaying notes (one per beat, some rests). Tempo is drawn
/// from 80–160 BPM.
pub fn tone_track(seed: u64, secs: f64, sample_rate: u32) -> (PcmSignal, ToneTrackInfo) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_70e5);
    let bpm = rng.random_range(80.0..160.0);
    let sr = sample_rate as f64;
    let n = (secs * sr) as usize;
    let period = 60.0 / bpm * sr;
    let mut buf: Vec<f64> = (0..n).map(|_| rng.random_range(-0.002..0.002)).collect();
    let mut beat_samples = Vec::new();
    let mut t = rng.random_range(0.1..0.6) * period;
    // Slowly varying loudness so sections differ.
    let phrase = rng.random_range(4.0..8.0);
    let mut k = 0usize;
    while (t as usize) + 1 < n {
        let p = t as usize;
        let dynamics = 0.55 + 0.45 * (2.0 * std::f64::consts::PI * k as f64 / (phrase * 4.0)).sin();
        let accent = if k % 4 == 0 { 1.0 } else { rng.random_range(0.4..0.85) };
        add_click(&mut buf, p, 0.6 * accent * dynamics.max(0.15), sample_rate);
        if rng.random_bool(0.3) {
            add_click(&mut buf, p + (period / 2.0) as usize, 0.25 * dynamics, sample_rate);
        }
        if rng.random_bool(0.8) {
            let midi = rng.random_range(55..82) as f64;
            let freq = 440.0 * 2f64.powf((midi - 69.0) / 12.0);
            let amp = 0.2 * rng.random_range(0.4..1.0) * dynamics.max(0.15);
            let len = (0.9 * period) as usize;
            for i in 0..len {
                let Some(slot) = buf.get_mut(p + i) else { break };
                let ts = i as f64 / sr;
                let attack = (ts / 0.01).min(1.0);
                let decay = (-ts / (0.4 * period / sr)).exp();
                *slot += amp * attack * decay * (2.0 * std::f64::consts::PI * freq * ts).sin();
            }
        }
        beat_samples.push(p);
        t += period;
        k += 1;
    }
    let peak = buf.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.95 {
        buf.iter_mut().for_each(|v| *v *= 0.95 / peak);
    }
    let signal = PcmSignal::new(buf, sample_rate).expect("synthesized signal is valid");
    (signal, ToneTrackInfo { seed, bpm, secs, sample_rate, beat_samples })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tone_track_is_deterministic_and_bounded() {
        let (a, ia) = tone_track(4, 3.0, 16000);
        let (b, ib) = tone_track(4, 3.0, 16000);
        assert_eq!(a, b);
        assert_eq!(ia, ib);
        assert!(a.samples().iter().all(|v| v.abs() <= 1.0));
        assert!((80.0..160.0).contains(&ia.bpm));
        let (c, _) = tone_track(5, 3.0, 16000);
        assert_ne!(a, c);
    }

    #[test]
    fn click_track_spacing() {
        let (_, clicks) = click_track(120.0, 5.0, 22050, 1);
        for w in clicks.windows(2) {
            assert!((w[1] - w[0]) as i64 - 11025 <= 1);
        }
    }
}
