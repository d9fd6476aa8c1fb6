//! Contrastive reward model: a flow encoder and a music encoder, each with a
//! projection head, trained with symmetric InfoNCE. The reward is the cosine
//! similarity of the two projections.

mod loss;
mod model;
mod train;

use thiserror::Error;

use crate::choreo::DatasetError;
use crate::flow::FlowError;
use crate::nn::NnError;

pub use loss::{cosine, info_nce, info_nce_grad, reward};
pub use model::{FlowBatchCache, HeadCache, Modality, MusicBatchCache, RewardConfig, RewardModel, REWARD_KIND};
pub use train::{retrieval_top1, train_reward_model, RewardTrainConfig, TrainLog, TrainLogRow};

#[derive(Debug, Error)]
pub enum RewardError {
    #[error("invalid reward model configuration: {0}")]
    InvalidConfig(String),
    #[error("music window has {got} values, expected {expected}")]
    WindowSize { got: usize, expected: usize },
    #[error("frame {frame} has no full music window in a {frames}-frame track")]
    WindowRange { frame: usize, frames: usize },
    #[error("flow patch is {got}x{got}, model expects {expected}x{expected}")]
    PatchSize { got: usize, expected: usize },
    #[error("embedding dimension {got}, expected {expected}")]
    Dim { got: usize, expected: usize },
    #[error("InfoNCE needs at least 2 pairs, got {0}")]
    BatchTooSmall(usize),
    #[error("not enough training pairs: {got} (need {needed})")]
    NotEnoughPairs { got: usize, needed: usize },
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("checkpoint is a {0:?}, not a reward model")]
    WrongKind(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
