use std::path::Path;

use serde::{Deserialize, Serialize};

use super::features::{MusicFeatureTrack, COLUMN_SCHEMA, FEATURE_DIM};
use super::AudioError;
use crate::container::{self, ContainerError};

pub const MFT_MAGIC: &[u8; 4] = b"MFT1";

#[derive(Serialize, Deserialize)]
struct Column {
    name: String,
    start: usize,
    len: usize,
}

#[derive(Serialize, Deserialize)]
struct MftHeader {
    frames: usize,
    frame_rate: usize,
    columns: Vec<Column>,
    tempo_bpm: f64,
    tempo_valid: bool,
    beats: Vec<usize>,
    peaks: Vec<usize>,
}

pub fn encode_mft(track: &MusicFeatureTrack) -> Result<Vec<u8>, ContainerError> {
    let header = MftHeader {
        frames: track.frames,
        frame_rate: crate::FPS,
        columns: COLUMN_SCHEMA.iter().map(|&(n, s, l)| Column { name: n.into(), start: s, len: l }).collect(),
        tempo_bpm: track.tempo_bpm,
        tempo_valid: track.tempo_valid,
        beats: track.beats.clone(),
        peaks: track.peaks.clone(),
    };
    container::encode(MFT_MAGIC, &header, &track.features)
}

pub fn write_mft(path: &Path, track: &MusicFeatureTrack) -> Result<(), AudioError> {
    let bytes = encode_mft(track)?;
    std::fs::write(path, bytes).map_err(|source| AudioError::Io { path: path.display().to_string(), source })
}

pub fn decode_mft(bytes: &[u8]) -> Result<MusicFeatureTrack, AudioError> {
    let (h, payload): (MftHeader, Vec<f32>) = container::decode(MFT_MAGIC, bytes)?;
    let schema_ok = h.columns.len() == COLUMN_SCHEMA.len()
        && h.columns.iter().zip(COLUMN_SCHEMA.iter()).all(|(c, s)| c.name == s.0 && c.start == s.1 && c.len == s.2);
    if !schema_ok {
        return Err(ContainerError::Header("column schema differs from envelope|mfcc|chroma|peaks|beats".into()).into());
    }
    if h.frame_rate != crate::FPS {
        return Err(ContainerError::Header(format!("frame rate {} (expected {})", h.frame_rate, crate::FPS)).into());
    }
    container::expect_len("mft", payload.len(), h.frames * FEATURE_DIM)?;
    let track = MusicFeatureTrack {
        features: payload,
        frames: h.frames,
        beats: h.beats,
        peaks: h.peaks,
        tempo_bpm: h.tempo_bpm,
        tempo_valid: h.tempo_valid,
    };
    track.validate()?;
    Ok(track)
}

pub fn read_mft(path: &Path) -> Result<MusicFeatureTrack, AudioError> {
    let bytes = std::fs::read(path).map_err(|source| AudioError::Io { path: path.display().to_string(), source })?;
    decode_mft(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::{extract_music_features, synth};

    #[test]
    fn mft_roundtrip_is_bit_exact() {
        let (sig, _) = synth::click_track(100.0, 5.0, 16000, 2);
        let track = extract_music_features(&sig).unwrap();
        let bytes = encode_mft(&track).unwrap();
        assert_eq!(&bytes[..4], b"MFT1");
        let back = decode_mft(&bytes).unwrap();
        assert_eq!(back, track);
    }
}
