//! Motion-music correlation: kinematic beats, BeatAlign and F1@note.

mod align;
mod kinematic;
mod report;

use thiserror::Error;

pub use align::{beat_align, f1_at_note, nearest_distance, note_threshold_frames, Note, Prf};
pub use kinematic::{kinematic_beats, moving_average, KinematicBeatConfig};
pub use report::{evaluate_trajectory, evaluate_velocity, CorrelationReport, NoteScores};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("trajectory covers music frames up to {needed} but the track has {frames}")]
    AlignmentMismatch { needed: usize, frames: usize },
    #[error("reference beat list is empty")]
    EmptyReference,
    #[error("invalid metric parameter: {0}")]
    InvalidParameter(String),
}
