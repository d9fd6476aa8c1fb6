//! Synthetic reference dancers whose motion follows the music by
//! construction, and the paired flow/music dataset built from them.

mod dataset;
mod figure;

use thiserror::Error;

use crate::audio::AudioError;
use crate::container::ContainerError;
use crate::env::EnvError;
use crate::flow::FlowError;

pub use dataset::{
    build_dataset, build_dataset_from_signals, generate_tone_corpus, sample_count, sample_frames, Dataset, DatasetConfig,
    TrackData, MANIFEST_NAME,
};
pub use figure::{
    figure_points, render_reference, render_reference_frame, synth_choreography, ChoreoConfig, ReferenceChoreography, FIGURE_JOINTS,
};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("need at least 2 usable tracks, got {usable}; failures: {failures:?}")]
    NotEnoughTracks { usable: usize, failures: Vec<String> },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Container(#[from] ContainerError),
}

impl DatasetError {
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            DatasetError::NotEnoughTracks { .. }
                | DatasetError::Manifest(_)
                | DatasetError::Io { .. }
                | DatasetError::Audio(_)
                | DatasetError::Container(_)
        )
    }
}
