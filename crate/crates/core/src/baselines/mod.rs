//! Comparison baselines: BPM-driven arm control and reward-model-free RL
//! with a flow-matching reward against the reference dancer.

mod bpm;
mod no_rm;

use thiserror::Error;

use crate::env::EnvError;
use crate::flow::FlowError;
use crate::rl::RlError;

pub use bpm::{bpm_control_policy, direction_change_frames, BpmControlConfig, BpmController};
pub use no_rm::{flow_matching_reward, train_dancer_no_rm, FlowMatchingTask};

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("{0} is not supported by this baseline")]
    UnsupportedAgent(String),
    #[error("invalid baseline configuration: {0}")]
    InvalidConfig(String),
    #[error("track {0:?} has no reference choreography covering the music")]
    MissingReference(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Rl(#[from] RlError),
}
