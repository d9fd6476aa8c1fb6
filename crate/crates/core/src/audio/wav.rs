use std::path::Path;

use super::AudioError;

/// Mono PCM audio with samples in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PcmSignal {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl PcmSignal {
    pub const MIN_SAMPLE_RATE: u32 = 8000;

    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self, AudioError> {
        if sample_rate < Self::MIN_SAMPLE_RATE {
            return Err(AudioError::InvalidSignal(format!("sample rate {sample_rate} below {}", Self::MIN_SAMPLE_RATE)));
        }
        if samples.is_empty() {
            return Err(AudioError::InvalidSignal("empty signal".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(AudioError::InvalidSignal(format!("non-finite sample at index {i}")));
        }
        let samples = samples.into_iter().map(|s| s.clamp(-1.0, 1.0)).collect();
        Ok(Self { samples, sample_rate })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

pub fn decode_wav(path: &Path) -> Result<PcmSignal, AudioError> {
    let bytes = std::fs::read(path).map_err(|source| AudioError::Io { path: path.display().to_string(), source })?;
    decode_wav_bytes(&bytes)
}

#[derive(Clone, Copy)]
enum SampleFormat {
    Int(u16),
    Float32,
}

struct Fmt {
    channels: u16,
    sample_rate: u32,
    format: SampleFormat,
}

const WAVE_FORMAT_PCM: u16 = 1;
const WAVE_FORMAT_IEEE_FLOAT: u16 = 3;
const WAVE_FORMAT_EXTENSIBLE: u16 = 0xFFFE;

fn u16_at(b: &[u8], i: usize) -> u16 {
    u16::from_le_bytes([b[i], b[i + 1]])
}

fn u32_at(b: &[u8], i: usize) -> u32 {
    u32::from_le_bytes([b[i], b[i + 1], b[i + 2], b[i + 3]])
}

fn parse_fmt(body: &[u8]) -> Result<Fmt, AudioError> {
    if body.len() < 16 {
        return Err(AudioError::Parse("fmt chunk shorter than 16 bytes".into()));
    }
    let mut tag = u16_at(body, 0);
    let channels = u16_at(body, 2);
    let sample_rate = u32_at(body, 4);
    let bits = u16_at(body, 14);
    if tag == WAVE_FORMAT_EXTENSIBLE {
        if body.len() < 26 {
            return Err(AudioError::Parse("extensible fmt chunk too short".into()));
        }
        tag = u16_at(body, 24);
    }
    let format = match (tag, bits) {
        (WAVE_FORMAT_PCM, 8 | 16 | 24) => SampleFormat::Int(bits),
        (WAVE_FORMAT_IEEE_FLOAT, 32) => SampleFormat::Float32,
        (t, b) => return Err(AudioError::Format(format!("format tag {t} with {b} bits per sample"))),
    };
    if !(1..=2).contains(&channels) {
        return Err(AudioError::Format(format!("{channels} channels (only mono and stereo are supported)")));
    }
    Ok(Fmt { channels, sample_rate, format })
}

/// Decode an in-memory RIFF/WAVE file, downmixing stereo by averaging.
pub fn decode_wav_bytes(bytes: &[u8]) -> Result<PcmSignal, AudioError> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(AudioError::Format("not a RIFF/WAVE file".into()));
    }
    let mut pos = 12;
    let mut fmt = None;
    let mut data = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let start = pos + 8;
        let end = start
            .checked_add(size)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| AudioError::Parse(format!("chunk {:?} runs past end of file", String::from_utf8_lossy(id))))?;
        match id {
            b"fmt " => fmt = Some(parse_fmt(&bytes[start..end])?),
            b"data" => data = Some(&bytes[start..end]),
            _ => {}
        }
        // Chunks are word aligned.
        pos = end + (size & 1);
    }
    let fmt = fmt.ok_or_else(|| AudioError::Parse("missing fmt chunk".into()))?;
    let data = data.ok_or_else(|| AudioError::Parse("missing data chunk".into()))?;

    let width = match fmt.format {
        SampleFormat::Int(bits) => bits as usize / 8,
        SampleFormat::Float32 => 4,
    };
    let frame_bytes = width * fmt.channels as usize;
    if data.is_empty() {
        return Err(AudioError::Parse("data chunk is empty".into()));
    }
    if data.len() % frame_bytes != 0 {
        return Err(AudioError::Parse("data chunk is not a whole number of sample frames".into()));
    }

    let decode_one = |b: &[u8]| -> f64 {
        match fmt.format {
            SampleFormat::Int(8) => (b[0] as f64 - 128.0) / 128.0,
            SampleFormat::Int(16) => i16::from_le_bytes([b[0], b[1]]) as f64 / 32768.0,
            SampleFormat::Int(24) => {
                let v = i32::from_le_bytes([0, b[0], b[1], b[2]]) >> 8;
                v as f64 / 8_388_608.0
            }
            SampleFormat::Int(_) => unreachable!("rejected in parse_fmt"),
            SampleFormat::Float32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
        }
    };

    let samples = data
        .chunks_exact(frame_bytes)
        .map(|frame| {
            let sum: f64 = frame.chunks_exact(width).map(decode_one).sum();
            sum / fmt.channels as f64
        })
        .collect();
    PcmSignal::new(samples, fmt.sample_rate)
}

/// Encode a mono signal as 16-bit PCM WAV bytes.
pub fn encode_wav_pcm16(signal: &PcmSignal) -> Vec<u8> {
    let n = signal.len();
    let data_len = (n * 2) as u32;
    let mut out = Vec::with_capacity(44 + n * 2);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&WAVE_FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&signal.sample_rate.to_le_bytes());
    out.extend_from_slice(&(signal.sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in &signal.samples {
        let v = (s * 32767.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn write_wav_pcm16(path: &Path, signal: &PcmSignal) -> Result<(), AudioError> {
    std::fs::write(path, encode_wav_pcm16(signal)).map_err(|source| AudioError::Io { path: path.display().to_string(), source })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Byte-level fixture generator, independent of `encode_wav_pcm16`.
    fn wav_fixture(tag: u16, channels: u16, rate: u32, bits: u16, data: &[u8]) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(b"RIFF");
        b.extend_from_slice(&(36 + data.len() as u32).to_le_bytes());
        b.extend_from_slice(b"WAVE");
        b.extend_from_slice(b"fmt ");
        b.extend_from_slice(&16u32.to_le_bytes());
        b.extend_from_slice(&tag.to_le_bytes());
        b.extend_from_slice(&channels.to_le_bytes());
        b.extend_from_slice(&rate.to_le_bytes());
        let align = channels * bits / 8;
        b.extend_from_slice(&(rate * align as u32).to_le_bytes());
        b.extend_from_slice(&align.to_le_bytes());
        b.extend_from_slice(&bits.to_le_bytes());
        b.extend_from_slice(b"data");
        b.extend_from_slice(&(data.len() as u32).to_le_bytes());
        b.extend_from_slice(data);
        b
    }

    #[test]
    fn single_16bit_sample_decodes_to_half() {
        let bytes = wav_fixture(1, 1, 16000, 16, &16384i16.to_le_bytes());
        let s = decode_wav_bytes(&bytes).unwrap();
        assert_eq!(s.len(), 1);
        assert!((s.samples()[0] - 0.5).abs() <= 2f64.powi(-15));
        assert_eq!(s.sample_rate(), 16000);
    }

    #[test]
    fn zero_length_data_is_parse_error() {
        let bytes = wav_fixture(1, 1, 16000, 16, &[]);
        assert!(matches!(decode_wav_bytes(&bytes), Err(AudioError::Parse(_))));
    }

    #[test]
    fn truncated_file_is_parse_error() {
        let bytes = wav_fixture(1, 1, 16000, 16, &[0, 1, 2, 3, 4, 5]);
        assert!(matches!(decode_wav_bytes(&bytes[..bytes.len() - 3]), Err(AudioError::Parse(_))));
    }

    #[test]
    fn stereo_opposite_channels_average_to_zero() {
        let mut data = Vec::new();
        for _ in 0..100 {
            data.extend_from_slice(&16384i16.to_le_bytes());
            data.extend_from_slice(&(-16384i16).to_le_bytes());
        }
        let s = decode_wav_bytes(&wav_fixture(1, 2, 16000, 16, &data)).unwrap();
        assert_eq!(s.len(), 100);
        assert!(s.samples().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn other_sample_widths() {
        let s = decode_wav_bytes(&wav_fixture(1, 1, 8000, 8, &[192])).unwrap();
        assert_eq!(s.samples(), &[0.5]);
        let v = (-4_194_304i32).to_le_bytes();
        let s = decode_wav_bytes(&wav_fixture(1, 1, 8000, 24, &v[..3])).unwrap();
        assert_eq!(s.samples(), &[-0.5]);
        let s = decode_wav_bytes(&wav_fixture(3, 1, 8000, 32, &0.25f32.to_le_bytes())).unwrap();
        assert_eq!(s.samples(), &[0.25]);
    }

    #[test]
    fn unsupported_codec_is_format_error() {
        // mu-law
        let bytes = wav_fixture(7, 1, 8000, 8, &[0, 0]);
        assert!(matches!(decode_wav_bytes(&bytes), Err(AudioError::Format(_))));
        assert!(matches!(decode_wav_bytes(b"OggS...."), Err(AudioError::Format(_))));
    }

    #[test]
    fn encode_then_decode() {
        let sig = PcmSignal::new(vec![0.0, 0.25, -0.5, 0.999], 22050).unwrap();
        let back = decode_wav_bytes(&encode_wav_pcm16(&sig)).unwrap();
        for (a, b) in sig.samples().iter().zip(back.samples()) {
            assert!((a - b).abs() < 1e-4);
        }
    }

    #[test]
    fn signal_validation() {
        assert!(PcmSignal::new(vec![], 16000).is_err());
        assert!(PcmSignal::new(vec![0.0], 4000).is_err());
        assert!(PcmSignal::new(vec![f64::NAN], 16000).is_err());
    }
}
