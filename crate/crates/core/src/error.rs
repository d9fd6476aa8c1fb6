use thiserror::Error;

use crate::{
    audio::AudioError, baselines::BaselineError, choreo::DatasetError, container::ContainerError,
    env::EnvError, flow::FlowError, metrics::MetricsError, nn::NnError, reward::RewardError,
    rl::RlError,
};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error(transparent)]
    Rl(#[from] RlError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Container(#[from] ContainerError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True when the error stems from bad user input (missing file, bad
    /// format, invalid configuration) rather than a runtime fault.
    pub fn is_input_error(&self) -> bool {
        match self {
            Error::Audio(_) | Error::Container(_) | Error::Io(_) => true,
            Error::Dataset(e) => e.is_input_error(),
            Error::Env(e) => env_input(e),
            Error::Nn(e) => nn_input(e),
            Error::Reward(e) => reward_input(e),
            Error::Rl(e) => rl_input(e),
            Error::Baseline(e) => match e {
                BaselineError::UnsupportedAgent(_) | BaselineError::InvalidConfig(_) | BaselineError::MissingReference(_) => true,
                BaselineError::Env(e) => env_input(e),
                BaselineError::Rl(e) => rl_input(e),
                BaselineError::Flow(_) => false,
            },
            Error::Metrics(e) => matches!(e, MetricsError::AlignmentMismatch { .. } | MetricsError::InvalidParameter(_)),
            Error::Flow(_) => false,
        }
    }
}

fn env_input(e: &EnvError) -> bool {
    matches!(e, EnvError::MusicTooShort { .. } | EnvError::UnknownAgent(_) | EnvError::Trajectory(_) | EnvError::Container(_))
}

fn nn_input(e: &NnError) -> bool {
    matches!(e, NnError::Container(_) | NnError::UnknownParam(_) | NnError::DuplicateParam(_))
}

fn reward_input(e: &RewardError) -> bool {
    match e {
        RewardError::InvalidConfig(_)
        | RewardError::NotEnoughPairs { .. }
        | RewardError::WrongKind(_)
        | RewardError::Io { .. }
        | RewardError::WindowRange { .. } => true,
        RewardError::Nn(e) => nn_input(e),
        RewardError::Dataset(e) => e.is_input_error(),
        _ => false,
    }
}

fn rl_input(e: &RlError) -> bool {
    match e {
        RlError::InvalidConfig(_) | RlError::NoMusic | RlError::Io { .. } | RlError::ObservationSize { .. } => true,
        RlError::Env(e) => env_input(e),
        RlError::Nn(e) => nn_input(e),
        RlError::Reward(e) => reward_input(e),
        _ => false,
    }
}
