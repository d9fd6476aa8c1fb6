//! Audio decoding and the per-frame music feature track.

mod beats;
mod features;
mod mft;
mod stft;
pub mod synth;
mod wav;

use thiserror::Error;

pub use beats::{detect_beats, detect_peaks, BeatEstimate, PeakConfig, TEMPO_MAX_BPM, TEMPO_MIN_BPM};
pub use features::{
    chroma, extract_music_features, mfcc, mfcc_raw, onset_envelope, onset_flux_raw, MusicFeatureTrack,
    COLUMN_SCHEMA, FEATURE_DIM, N_CHROMA, N_MFCC,
};
pub use mft::{decode_mft, encode_mft, read_mft, write_mft, MFT_MAGIC};
pub use stft::{Spectrogram, HOP_FPS, N_FFT};
pub use wav::{decode_wav, decode_wav_bytes, encode_wav_pcm16, write_wav_pcm16, PcmSignal};

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("unsupported audio format: {0}")]
    Format(String),
    #[error("failed to parse WAV: {0}")]
    Parse(String),
    #[error("invalid signal: {0}")]
    InvalidSignal(String),
    #[error("signal too short: {samples} samples, need at least {needed}")]
    TooShort { samples: usize, needed: usize },
    #[error("envelope too short for beat tracking: {frames} frames, need {needed}")]
    EnvelopeTooShort { frames: usize, needed: usize },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Container(#[from] crate::container::ContainerError),
}
