//! PPO with GAE for discrete (cart-pole) and continuous (arm) dancers
//! trained against the frozen reward model.

mod buffer;
mod policy;
mod ppo;
mod rollout;
mod train;

use thiserror::Error;

use crate::env::EnvError;
use crate::flow::FlowError;
use crate::nn::NnError;
use crate::reward::RewardError;

pub use buffer::{compute_gae, normalize_advantages, RolloutBuffer};
pub use policy::{ObsNorm, ObservationKind, Policy, PolicyMeta, PolicyOutput, LOG_STD_MAX, LOG_STD_MIN, POLICY_KIND};
pub use ppo::{clipped_surrogate, ppo_loss, ppo_update, PpoBatch, PpoStats, TrainConfig};
pub use rollout::{
    collect_rollouts, generate_dance, observation_frame, play_track, random_controller, step_reward, Collector, Dance, DanceTask,
    EpisodeSummary, RewardModelTask,
};
pub use train::{train_dancer, train_on_task, CurveRow, LearningCurve, ReturnScaler};

#[derive(Debug, Error)]
pub enum RlError {
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("observation has {got} values, policy expects {expected}")]
    ObservationSize { got: usize, expected: usize },
    #[error("frame {frame} has no full music window in a {frames}-frame track")]
    WindowRange { frame: usize, frames: usize },
    #[error("no music tracks to train or dance on")]
    NoMusic,
    #[error("rollout buffer is empty")]
    EmptyBuffer,
    #[error("non-finite PPO loss in epoch {epoch}, minibatch {minibatch}: {detail}")]
    NonFiniteLoss { epoch: usize, minibatch: usize, detail: String },
    #[error("reward model changed during training ({before} -> {after})")]
    RewardModelModified { before: String, after: String },
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
