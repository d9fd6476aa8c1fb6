use serde::{Deserialize, Serialize};

use super::beats::{detect_beats, detect_peaks, PeakConfig};
use super::stft::{Spectrogram, N_FFT};
use super::{AudioError, PcmSignal};
use crate::FPS;

pub const N_MFCC: usize = 20;
pub const N_MEL: usize = 40;
pub const N_CHROMA: usize = 12;
pub const FEATURE_DIM: usize = 35;

/// Frozen column layout of the feature matrix: `(name, start, len)`.
pub const COLUMN_SCHEMA: [(&str, usize, usize); 5] =
    [("envelope", 0, 1), ("mfcc", 1, 20), ("chroma", 21, 12), ("peaks", 33, 1), ("beats", 34, 1)];

const LOG_COMPRESSION: f64 = 100.0;
const LOG_MEL_FLOOR: f64 = 1e-10;
const CHROMA_FMIN: f64 = 65.0;
const CHROMA_FMAX: f64 = 5000.0;
const SILENT_ENERGY: f64 = 1e-12;

/// Per-frame music features at 60 FPS plus beat annotations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MusicFeatureTrack {
    /// `frames × 35` row-major, columns per [`COLUMN_SCHEMA`].
    pub features: Vec<f32>,
    pub frames: usize,
    pub beats: Vec<usize>,
    pub peaks: Vec<usize>,
    /// Estimated tempo; falls back to 120 when `tempo_valid` is false.
    pub tempo_bpm: f64,
    pub tempo_valid: bool,
}

impl MusicFeatureTrack {
    pub const FALLBACK_TEMPO: f64 = 120.0;

    pub fn row(&self, t: usize) -> &[f32] {
        &self.features[t * FEATURE_DIM..(t + 1) * FEATURE_DIM]
    }

    pub fn envelope(&self) -> Vec<f64> {
        (0..self.frames).map(|t| self.row(t)[0] as f64).collect()
    }

    /// Rows `center - half ..= center + half` flattened, or `None` when the
    /// window leaves the track.
    pub fn window(&self, center: usize, half: usize) -> Option<&[f32]> {
        if center < half || center + half >= self.frames {
            return None;
        }
        Some(&self.features[(center - half) * FEATURE_DIM..(center + half + 1) * FEATURE_DIM])
    }

    /// Checks the structural invariants of the column layout.
    pub fn validate(&self) -> Result<(), AudioError> {
        let bad = |m: String| Err(AudioError::InvalidSignal(m));
        if self.features.len() != self.frames * FEATURE_DIM {
            return bad(format!("feature buffer has {} values for {} frames", self.features.len(), self.frames));
        }
        if self.features.iter().any(|v| !v.is_finite()) {
            return bad("non-finite feature".into());
        }
        for t in 0..self.frames {
            let r = self.row(t);
            if r[0] < 0.0 {
                return bad(format!("negative envelope at frame {t}"));
            }
            if !(r[33] == 0.0 || r[33] == 1.0) || !(r[34] == 0.0 || r[34] == 1.0) {
                return bad(format!("one-hot columns not binary at frame {t}"));
            }
        }
        for (name, list) in [("beats", &self.beats), ("peaks", &self.peaks)] {
            if list.windows(2).any(|w| w[0] >= w[1]) || list.last().is_some_and(|&l| l >= self.frames) {
                return bad(format!("{name} not strictly increasing within the track"));
            }
        }
        if !(self.tempo_bpm > 0.0) {
            return bad("tempo must be positive".into());
        }
        Ok(())
    }
}

/// Unnormalized half-wave-rectified spectral flux of the log-compressed
/// magnitude spectrogram. Frame 0 is compared against silence.
pub fn onset_flux_raw(spec: &Spectrogram) -> Vec<f64> {
    let mut prev = vec![0.0; spec.bins];
    let mut cur = vec![0.0; spec.bins];
    (0..spec.frames)
        .map(|t| {
            for (c, &m) in cur.iter_mut().zip(spec.frame(t)) {
                *c = (1.0 + LOG_COMPRESSION * m).ln();
            }
            let flux = cur.iter().zip(&prev).map(|(c, p)| (c - p).max(0.0)).sum();
            std::mem::swap(&mut prev, &mut cur);
            flux
        })
        .collect()
}

/// Onset envelope at 60 FPS, max-normalized to `[0, 1]` when nonzero.
pub fn onset_envelope(signal: &PcmSignal) -> Result<Vec<f64>, AudioError> {
    let spec = Spectrogram::compute(signal)?;
    Ok(normalize_max(onset_flux_raw(&spec)))
}

fn normalize_max(mut x: Vec<f64>) -> Vec<f64> {
    let max = x.iter().cloned().fold(0.0, f64::max);
    if max > 0.0 {
        x.iter_mut().for_each(|v| *v /= max);
    }
    x
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular mel filterbank, `N_MEL × bins`, spanning 0 Hz to Nyquist.
fn mel_filterbank(sample_rate: u32, bins: usize) -> Vec<Vec<f64>> {
    let nyquist = sample_rate as f64 / 2.0;
    let (lo, hi) = (hz_to_mel(0.0), hz_to_mel(nyquist));
    let edges: Vec<f64> = (0..N_MEL + 2).map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (N_MEL + 1) as f64)).collect();
    (0..N_MEL)
        .map(|m| {
            let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
            (0..bins)
                .map(|k| {
                    let f = k as f64 * sample_rate as f64 / N_FFT as f64;
                    if f <= left || f >= right {
                        0.0
                    } else if f <= center {
                        (f - left) / (center - left)
                    } else {
                        (right - f) / (right - center)
                    }
                })
                .collect()
        })
        .collect()
}

fn mfcc_from_spec(spec: &Spectrogram) -> Vec<f64> {
    let fb = mel_filterbank(spec.sample_rate, spec.bins);
    let mut out = Vec::with_capacity(spec.frames * N_MFCC);
    let mut logmel = [0.0; N_MEL];
    let scale0 = (1.0 / N_MEL as f64).sqrt();
    let scale = (2.0 / N_MEL as f64).sqrt();
    for t in 0..spec.frames {
        let row = spec.frame(t);
        for (m, filt) in fb.iter().enumerate() {
            let e: f64 = filt.iter().zip(row).map(|(w, x)| w * x * x).sum();
            logmel[m] = e.max(LOG_MEL_FLOOR).ln();
        }
        // Orthonormal DCT-II, coefficients 0..N_MFCC.
        for k in 0..N_MFCC {
            let s: f64 = logmel
                .iter()
                .enumerate()
                .map(|(n, v)| v * (std::f64::consts::PI * k as f64 * (2 * n + 1) as f64 / (2 * N_MEL) as f64).cos())
                .sum();
            out.push(s * if k == 0 { scale0 } else { scale });
        }
    }
    out
}

/// Raw cepstra, `T × 20`, before per-track normalization.
pub fn mfcc_raw(signal: &PcmSignal) -> Result<Vec<f64>, AudioError> {
    Ok(mfcc_from_spec(&Spectrogram::compute(signal)?))
}

/// MFCC, `T × 20`, each coefficient z-normalized over the track (zero
/// where a coefficient has no variance).
pub fn mfcc(signal: &PcmSignal) -> Result<Vec<f64>, AudioError> {
    Ok(znormalize_columns(mfcc_raw(signal)?, N_MFCC))
}

fn znormalize_columns(mut x: Vec<f64>, cols: usize) -> Vec<f64> {
    let rows = x.len() / cols;
    for c in 0..cols {
        let mean = (0..rows).map(|r| x[r * cols + c]).sum::<f64>() / rows as f64;
        let var = (0..rows).map(|r| (x[r * cols + c] - mean).powi(2)).sum::<f64>() / rows as f64;
        let std = var.sqrt();
        for r in 0..rows {
            let v = &mut x[r * cols + c];
            *v = if std > 1e-9 { (*v - mean) / std } else { 0.0 };
        }
    }
    x
}

fn chroma_from_spec(spec: &Spectrogram) -> Vec<f64> {
    // Pitch class per bin, C = 0 .. B = 11; None outside the analysis band.
    let classes: Vec<Option<usize>> = (0..spec.bins)
        .map(|k| {
            let f = spec.bin_hz(k);
            if !(CHROMA_FMIN..=CHROMA_FMAX).contains(&f) {
                return None;
            }
            let semis = (12.0 * (f / 440.0).log2()).round() as i64 + 9;
            Some(semis.rem_euclid(12) as usize)
        })
        .collect();
    let mut out = vec![0.0; spec.frames * N_CHROMA];
    for t in 0..spec.frames {
        let row = &mut out[t * N_CHROMA..(t + 1) * N_CHROMA];
        for (k, m) in spec.frame(t).iter().enumerate() {
            if let Some(pc) = classes[k] {
                row[pc] += m * m;
            }
        }
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > SILENT_ENERGY {
            row.iter_mut().for_each(|v| *v /= norm);
        } else {
            row.iter_mut().for_each(|v| *v = 0.0);
        }
    }
    out
}

/// Chroma, `T × 12`, pitch class C first; rows L2-normalized when nonzero.
pub fn chroma(signal: &PcmSignal) -> Result<Vec<f64>, AudioError> {
    Ok(chroma_from_spec(&Spectrogram::compute(signal)?))
}

/// Full 35-column feature track with beats, peaks and tempo.
pub fn extract_music_features(signal: &PcmSignal) -> Result<MusicFeatureTrack, AudioError> {
    let spec = Spectrogram::compute(signal)?;
    let frames = spec.frames;
    let envelope = normalize_max(onset_flux_raw(&spec));
    let mfcc = znormalize_columns(mfcc_from_spec(&spec), N_MFCC);
    let chroma = chroma_from_spec(&spec);
    let beat_est = detect_beats(&envelope, FPS)?;
    let peaks = detect_peaks(&envelope, &PeakConfig::default());

    let mut features = vec![0f32; frames * FEATURE_DIM];
    for t in 0..frames {
        let row = &mut features[t * FEATURE_DIM..(t + 1) * FEATURE_DIM];
        row[0] = envelope[t] as f32;
        for c in 0..N_MFCC {
            row[1 + c] = mfcc[t * N_MFCC + c] as f32;
        }
        for c in 0..N_CHROMA {
            row[21 + c] = chroma[t * N_CHROMA + c] as f32;
        }
    }
    for &p in &peaks {
        features[p * FEATURE_DIM + 33] = 1.0;
    }
    for &b in &beat_est.beats {
        features[b * FEATURE_DIM + 34] = 1.0;
    }
    let track = MusicFeatureTrack {
        features,
        frames,
        beats: beat_est.beats,
        peaks,
        tempo_bpm: beat_est.tempo_bpm.unwrap_or(MusicFeatureTrack::FALLBACK_TEMPO),
        tempo_valid: beat_est.tempo_bpm.is_some(),
    };
    debug_assert!(track.validate().is_ok());
    Ok(track)
}
