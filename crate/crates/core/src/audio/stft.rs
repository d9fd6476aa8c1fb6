use rustfft::{num_complex::Complex, FftPlanner};

use super::{AudioError, PcmSignal};

/// FFT / analysis window length in samples.
pub const N_FFT: usize = 1024;
/// Analysis frame rate; frames are placed at sample-accurate centres
/// `round(i * sample_rate / HOP_FPS)` so fractional hops never drift.
pub const HOP_FPS: usize = crate::FPS;

/// Magnitude spectrogram at exactly 60 frames per second.
#[derive(Debug, Clone)]
pub struct Spectrogram {
    /// `frames × bins` row-major magnitudes.
    pub mags: Vec<f64>,
    pub frames: usize,
    pub bins: usize,
    pub sample_rate: u32,
}

impl Spectrogram {
    pub fn frame(&self, t: usize) -> &[f64] {
        &self.mags[t * self.bins..(t + 1) * self.bins]
    }

    pub fn bin_hz(&self, k: usize) -> f64 {
        k as f64 * self.sample_rate as f64 / N_FFT as f64
    }

    pub fn compute(signal: &PcmSignal) -> Result<Self, AudioError> {
        if signal.len() < N_FFT {
            return Err(AudioError::TooShort { samples: signal.len(), needed: N_FFT });
        }
        let sr = signal.sample_rate() as u64;
        let frames = frame_count(signal.len(), signal.sample_rate());
        let bins = N_FFT / 2 + 1;
        let window: Vec<f64> = (0..N_FFT)
            .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / N_FFT as f64).cos())
            .collect();
        let fft = FftPlanner::<f64>::new().plan_fft_forward(N_FFT);
        let mut buf = vec![Complex::new(0.0, 0.0); N_FFT];
        let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        let x = signal.samples();
        let mut mags = Vec::with_capacity(frames * bins);
        for t in 0..frames {
            // Integer rounding of t * sr / 60 keeps frame placement exact.
            let center = ((2 * t as u64 * sr + HOP_FPS as u64) / (2 * HOP_FPS as u64)) as i64;
            let start = center - (N_FFT / 2) as i64;
            for (n, c) in buf.iter_mut().enumerate() {
                let idx = start + n as i64;
                let s = if idx >= 0 && (idx as usize) < x.len() { x[idx as usize] } else { 0.0 };
                *c = Complex::new(s * window[n], 0.0);
            }
            fft.process_with_scratch(&mut buf, &mut scratch);
            mags.extend(buf[..bins].iter().map(|c| c.norm()));
        }
        Ok(Self { mags, frames, bins, sample_rate: signal.sample_rate() })
    }
}

/// `T = floor(duration * 60)`.
pub fn frame_count(samples: usize, sample_rate: u32) -> usize {
    (samples as u64 * HOP_FPS as u64 / sample_rate as u64) as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_count_matches_duration() {
        for &(n, sr) in &[(22050usize, 22050u32), (48000 * 3 + 17, 48000), (44100 * 5 - 1, 44100), (16000 * 4, 16000)] {
            let t = frame_count(n, sr) as f64;
            let dur = n as f64 / sr as f64;
            assert!((t - dur * 60.0).abs() <= 1.0);
        }
    }

    #[test]
    fn sine_peaks_at_expected_bin() {
        let sr = 16000;
        let f = 1000.0;
        let x: Vec<f64> = (0..sr).map(|n| (2.0 * std::f64::consts::PI * f * n as f64 / sr as f64).sin()).collect();
        let spec = Spectrogram::compute(&PcmSignal::new(x, sr as u32).unwrap()).unwrap();
        let row = spec.frame(30);
        let argmax = row.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert_eq!(argmax, 64); // 1000 Hz * 1024 / 16000
    }

    #[test]
    fn too_short_is_error() {
        let sig = PcmSignal::new(vec![0.0; N_FFT - 1], 16000).unwrap();
        assert!(matches!(Spectrogram::compute(&sig), Err(AudioError::TooShort { .. })));
    }
}
