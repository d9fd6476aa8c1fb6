use super::BaselineError;
use crate::audio::{MusicFeatureTrack, FEATURE_DIM};
use crate::choreo::{render_reference_frame, Dataset, ReferenceChoreography};
use crate::env::{EnvConfig, EnvState};
use crate::flow::{estimate_flow_with, flow_l1_distance, resize_full, FlowField, HornSchunck};
use crate::rl::{train_on_task, CurveRow, DanceTask, LearningCurve, ObservationKind, Policy, RlError, TrainConfig};

/// Negative mean L1 distance between two flows. The reference is resampled
/// to the agent's resolution when the sizes differ.
pub fn flow_matching_reward(agent: &FlowField, reference: &FlowField) -> Result<f64, BaselineError> {
    if (agent.width, agent.height) == (reference.width, reference.height) {
        return Ok(-flow_l1_distance(agent, reference)?);
    }
    if agent.width != agent.height {
        return Err(crate::flow::FlowError::SizeMismatch { a: (agent.width, agent.height), b: (reference.width, reference.height) }.into());
    }
    let p = resize_full(reference, agent.width)?;
    let resized = FlowField { width: p.size, height: p.size, u: p.u, v: p.v };
    Ok(-flow_l1_distance(agent, &resized)?)
}

/// Observation `[m_t; s_t]` with the raw music row and a reward that matches
/// the agent's flow against the reference dancer's flow at the same frame.
pub struct FlowMatchingTask {
    tracks: Vec<MusicFeatureTrack>,
    references: Vec<ReferenceChoreography>,
    resolution: usize,
    flow: HornSchunck,
}

impl FlowMatchingTask {
    pub fn new(
        tracks: Vec<MusicFeatureTrack>,
        references: Vec<ReferenceChoreography>,
        names: &[String],
        resolution: usize,
        flow: HornSchunck,
    ) -> Result<Self, BaselineError> {
        for (i, (m, r)) in tracks.iter().zip(&references).enumerate() {
            if r.poses.len() < m.frames {
                return Err(BaselineError::MissingReference(names.get(i).cloned().unwrap_or_default()));
            }
        }
        if tracks.len() != references.len() {
            return Err(BaselineError::MissingReference(format!("{} tracks, {} references", tracks.len(), references.len())));
        }
        Ok(Self { tracks, references, resolution, flow })
    }

    /// Reference flow from frame `t − 1` to `t`.
    pub fn reference_flow(&self, track: usize, t: usize) -> Result<FlowField, BaselineError> {
        let poses = &self.references[track].poses;
        if t == 0 || t >= poses.len() {
            return Err(BaselineError::MissingReference(format!("track {track} frame {t}")));
        }
        let a = render_reference_frame(&poses[t - 1], self.resolution);
        let b = render_reference_frame(&poses[t], self.resolution);
        Ok(estimate_flow_with(&a, &b, &self.flow)?)
    }

    pub fn reference_len(&self, track: usize) -> usize {
        self.references[track].poses.len()
    }
}

fn to_rl(e: BaselineError) -> RlError {
    match e {
        BaselineError::Rl(e) => e,
        BaselineError::Flow(e) => RlError::Flow(e),
        BaselineError::Env(e) => RlError::Env(e),
        other => RlError::InvalidConfig(other.to_string()),
    }
}

impl DanceTask for FlowMatchingTask {
    fn obs_dim(&self, state_dim: usize) -> usize {
        FEATURE_DIM + state_dim
    }

    fn tracks(&self) -> &[MusicFeatureTrack] {
        &self.tracks
    }

    fn observe(&self, track: usize, frame: usize, state: &EnvState) -> Result<Vec<f64>, RlError> {
        let m = &self.tracks[track];
        if frame >= m.frames {
            return Err(RlError::WindowRange { frame, frames: m.frames });
        }
        let mut o: Vec<f64> = m.row(frame).iter().map(|&v| v as f64).collect();
        o.extend(state.vector());
        Ok(o)
    }

    fn reward(&self, track: usize, frame: usize, flow: &FlowField, penalty: f64, _center: f64) -> Result<(f64, f64), RlError> {
        let reference = self.reference_flow(track, frame).map_err(to_rl)?;
        let raw = flow_matching_reward(flow, &reference).map_err(to_rl)?;
        Ok((raw, raw + penalty))
    }
}

/// PPO without a reward model, on the dataset's training tracks. Episodes
/// never run past the end of the reference dance.
pub fn train_dancer_no_rm(
    dataset: &Dataset,
    env_config: &EnvConfig,
    cfg: &TrainConfig,
    workers: usize,
    on_iteration: impl FnMut(&CurveRow),
) -> Result<(Policy, LearningCurve), BaselineError> {
    let split = &dataset.train;
    let tracks: Vec<MusicFeatureTrack> = split.iter().map(|&i| dataset.tracks[i].music.clone()).collect();
    let refs: Vec<ReferenceChoreography> = split.iter().map(|&i| dataset.tracks[i].choreo.clone()).collect();
    let names: Vec<String> = split.iter().map(|&i| dataset.tracks[i].name.clone()).collect();
    let task = FlowMatchingTask::new(tracks, refs, &names, env_config.resolution, dataset.config.flow())?;
    let shortest = (0..task.tracks.len()).map(|i| task.reference_len(i)).min().unwrap_or(0);
    let mut env_config = *env_config;
    env_config.episode_cap = env_config.episode_cap.min(shortest);
    Ok(train_on_task(&task, &env_config, ObservationKind::RawMusic, cfg, workers, on_iteration)?)
}
