use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::buffer::RolloutBuffer;
use super::policy::Policy;
use super::RlError;
use crate::audio::MusicFeatureTrack;
use crate::derive_seed;
use crate::env::{Action, AgentKind, Env, EnvState, TrajRow, Trajectory};
use crate::flow::{estimate_flow, FlowField};
use crate::frame::Frame;
use crate::reward::{cosine, RewardModel};

/// Combines the raw similarity with the centre factor and penalty.
pub fn step_reward(raw_sim: f64, penalty: f64, center_factor: f64) -> f64 {
    raw_sim * center_factor + penalty
}

/// Music frame whose motion the next action produces: the flow between the
/// current and the next rendered frame is paired with this frame's window.
pub fn observation_frame(state: &EnvState) -> usize {
    state.cursor.frame + 1
}

/// Observation and reward source for a dancing task.
pub trait DanceTask: Sync {
    fn obs_dim(&self, state_dim: usize) -> usize;
    fn tracks(&self) -> &[MusicFeatureTrack];
    fn observe(&self, track: usize, frame: usize, state: &EnvState) -> Result<Vec<f64>, RlError>;
    /// Raw score of the agent's flow at `frame` and the shaped step reward.
    fn reward(&self, track: usize, frame: usize, flow: &FlowField, penalty: f64, center: f64) -> Result<(f64, f64), RlError>;
}

/// Reward-model task: observation `[h^m; s]`, reward `cos(z^m, z^o)`.
/// Music embeddings are computed once per track.
pub struct RewardModelTask<'a> {
    pub model: &'a RewardModel,
    tracks: &'a [MusicFeatureTrack],
    /// Per track, `(h^m, z^m)` for frames `w_a .. T − w_a`.
    embeddings: Vec<Vec<(Vec<f64>, Vec<f64>)>>,
}

impl<'a> RewardModelTask<'a> {
    pub fn new(model: &'a RewardModel, tracks: &'a [MusicFeatureTrack], workers: usize) -> Result<Self, RlError> {
        let w = model.config.half_window;
        let embeddings = crate::par::parallel_map(tracks.iter().collect(), workers, |_, m: &MusicFeatureTrack| {
            let frames: Vec<usize> = (w..m.frames.saturating_sub(w)).collect();
            model.music_embeddings(m, &frames)
        })
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { model, tracks, embeddings })
    }

    fn embedding(&self, track: usize, frame: usize) -> Result<&(Vec<f64>, Vec<f64>), RlError> {
        let w = self.model.config.half_window;
        let frames = self.tracks[track].frames;
        frame
            .checked_sub(w)
            .and_then(|i| self.embeddings[track].get(i))
            .ok_or(RlError::WindowRange { frame, frames })
    }
}

impl DanceTask for RewardModelTask<'_> {
    fn obs_dim(&self, state_dim: usize) -> usize {
        self.model.config.d_h + state_dim
    }

    fn tracks(&self) -> &[MusicFeatureTrack] {
        self.tracks
    }

    fn observe(&self, track: usize, frame: usize, state: &EnvState) -> Result<Vec<f64>, RlError> {
        let mut o = self.embedding(track, frame)?.0.clone();
        o.extend(state.vector());
        Ok(o)
    }

    fn reward(&self, track: usize, frame: usize, flow: &FlowField, penalty: f64, center: f64) -> Result<(f64, f64), RlError> {
        let z_m = &self.embedding(track, frame)?.1;
        let z_o = self.model.flow_embedding(flow)?;
        let sim = cosine(z_m, &z_o);
        Ok((sim, step_reward(sim, penalty, center)))
    }
}

/// Summary of a finished training episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeSummary {
    pub length: usize,
    pub total_reward: f64,
    pub view_exit: bool,
}

/// One environment copy that keeps its episode running across
/// collection calls.
#[derive(Debug, Clone)]
pub struct Collector {
    env: Env,
    seed: u64,
    rng: ChaCha8Rng,
    episode: u64,
    current: Option<(usize, EnvState, Frame)>,
    ep_len: usize,
    ep_reward: f64,
}

impl Collector {
    pub fn new(env: Env, seed: u64) -> Self {
        Self { env, seed, rng: ChaCha8Rng::seed_from_u64(derive_seed(seed, 0xac7)), episode: 0, current: None, ep_len: 0, ep_reward: 0.0 }
    }

    fn start_episode<T: DanceTask + ?Sized>(&mut self, task: &T) -> Result<(usize, EnvState, Frame), RlError> {
        let n = task.tracks().len();
        if n == 0 {
            return Err(RlError::NoMusic);
        }
        let track = self.rng.random_range(0..n);
        let state = self.env.reset(derive_seed(self.seed, self.episode), &task.tracks()[track], track)?;
        self.episode += 1;
        self.ep_len = 0;
        self.ep_reward = 0.0;
        let frame = self.env.render(&state);
        Ok((track, state, frame))
    }

    /// Runs exactly `n_steps` environment steps under `policy`.
    pub fn collect<T: DanceTask + ?Sized>(
        &mut self,
        policy: &Policy,
        task: &T,
        n_steps: usize,
    ) -> Result<(RolloutBuffer, Vec<EpisodeSummary>), RlError> {
        if n_steps == 0 {
            return Err(RlError::InvalidConfig("n_steps must be at least 1".into()));
        }
        let mut buf = RolloutBuffer::new(policy.meta.obs_dim);
        let mut episodes = Vec::new();
        for _ in 0..n_steps {
            let (track, state, img) = match self.current.take() {
                Some(c) => c,
                None => self.start_episode(task)?,
            };
            let frame = observation_frame(&state);
            let obs = task.observe(track, frame, &state)?;
            let (out, _) = policy.forward(&obs, 1)?;
            let (action, stored) = policy.sample(out.row(0), &out.log_std, &mut self.rng);
            let log_prob = policy.log_prob(out.row(0), &out.log_std, &stored);
            let res = self.env.step(&state, &action)?;
            let flow = estimate_flow(&img, &res.frame)?;
            let (raw, reward) = task.reward(track, frame, &flow, res.penalty, res.center_factor)?;
            // Only the cart-pole is penalised by leaving the view, which ends the episode.
            let terminal = res.done && res.penalty < 0.0 && self.env.kind() == AgentKind::CartPole;
            let truncation_value = if res.done && !terminal {
                let o = task.observe(track, observation_frame(&res.state), &res.state);
                // Past the last playable frame there is no music window; the
                // episode ends with the music, so bootstrap from zero.
                match o {
                    Ok(o) => policy.forward(&o, 1)?.0.values[0],
                    Err(RlError::WindowRange { .. }) => 0.0,
                    Err(e) => return Err(e),
                }
            } else {
                0.0
            };
            buf.obs.extend_from_slice(&obs);
            buf.actions.push(stored);
            buf.log_probs.push(log_prob);
            buf.values.push(out.values[0]);
            buf.rewards.push(reward);
            buf.raw.push(raw);
            buf.penalties.push(res.penalty);
            buf.center_factors.push(res.center_factor);
            buf.dones.push(res.done);
            buf.terminals.push(terminal);
            buf.truncation_values.push(truncation_value);
            self.ep_len += 1;
            self.ep_reward += reward;
            if res.done {
                episodes.push(EpisodeSummary { length: self.ep_len, total_reward: self.ep_reward, view_exit: terminal });
            } else {
                self.current = Some((track, res.state, res.frame));
            }
        }
        buf.last_value = match &self.current {
            Some((track, state, _)) => {
                let o = task.observe(*track, observation_frame(state), state)?;
                policy.forward(&o, 1)?.0.values[0]
            }
            None => 0.0,
        };
        Ok((buf, episodes))
    }
}

/// Convenience wrapper: a fresh collector with `seed` runs `n_steps`.
pub fn collect_rollouts<T: DanceTask + ?Sized>(
    policy: &Policy,
    env: &Env,
    task: &T,
    n_steps: usize,
    seed: u64,
) -> Result<(RolloutBuffer, Vec<EpisodeSummary>), RlError> {
    Collector::new(env.clone(), seed).collect(policy, task, n_steps)
}

/// A dance over a whole track.
#[derive(Debug, Clone)]
pub struct Dance {
    pub trajectory: Trajectory,
    /// Rendered frames: the initial frame followed by one per action.
    pub frames: Vec<Frame>,
    /// Raw per-step scores (cosine similarity for the reward model); empty
    /// when no task scored the dance.
    pub raw_scores: Vec<f64>,
}

impl Dance {
    pub fn mean_raw_score(&self) -> f64 {
        if self.raw_scores.is_empty() {
            return 0.0;
        }
        self.raw_scores.iter().sum::<f64>() / self.raw_scores.len() as f64
    }
}

/// Plays the whole playable range of a track with an arbitrary controller.
/// Leaving the view is penalised but does not stop the dance; the episode
/// runs until the music ends, giving `T − 2·w_a − 1` actions.
#[allow(clippy::too_many_arguments)]
pub fn play_track<C>(
    env: &Env,
    music: &MusicFeatureTrack,
    music_name: &str,
    track: usize,
    seed: u64,
    mut controller: C,
    scorer: Option<&dyn DanceTask>,
    render: bool,
) -> Result<Dance, RlError>
where
    C: FnMut(&EnvState) -> Result<Action, RlError>,
{
    let mut state = env.reset_full(seed, music, track)?;
    let mut trajectory = Trajectory::new(env.kind(), seed, music_name, state.cursor.start);
    let mut img = env.render(&state);
    let mut frames = Vec::new();
    let mut raw_scores = Vec::new();
    while state.cursor.frame < state.cursor.end {
        let action = controller(&state)?;
        let frame = observation_frame(&state);
        let res = env.step(&state, &action)?;
        let mut reward = res.penalty;
        if let Some(task) = scorer {
            let flow = estimate_flow(&img, &res.frame)?;
            let (raw, r) = task.reward(track, frame, &flow, res.penalty, res.center_factor)?;
            raw_scores.push(raw);
            reward = r;
        }
        trajectory.push(TrajRow { q: res.state.q.clone(), qdot: res.state.qdot.clone(), action: action.to_vec(), reward, penalty: res.penalty });
        if render {
            frames.push(std::mem::replace(&mut img, res.frame));
        } else {
            img = res.frame;
        }
        state = res.state;
    }
    if render {
        frames.push(img);
    }
    Ok(Dance { trajectory, frames, raw_scores })
}

/// Runs a trained policy over a whole track, greedily (`deterministic`) or
/// by sampling with `seed`.
#[allow(clippy::too_many_arguments)]
pub fn generate_dance<T: DanceTask>(
    policy: &Policy,
    env: &Env,
    task: &T,
    track: usize,
    music_name: &str,
    deterministic: bool,
    seed: u64,
    render: bool,
) -> Result<Dance, RlError> {
    let music = task.tracks().get(track).ok_or(RlError::NoMusic)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0xda9));
    let controller = |state: &EnvState| -> Result<Action, RlError> {
        let obs = task.observe(track, observation_frame(state), state)?;
        let (out, _) = policy.forward(&obs, 1)?;
        Ok(if deterministic { policy.mode(out.row(0)).0 } else { policy.sample(out.row(0), &out.log_std, &mut rng).0 })
    };
    play_track(env, music, music_name, track, seed, controller, Some(task), render)
}

/// Uniformly random actions (discrete) or uniform commands within the
/// action limit (continuous).
pub fn random_controller(env: &Env, seed: u64) -> impl FnMut(&EnvState) -> Result<Action, RlError> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x7a2d));
    let kind = env.kind();
    move |_| {
        Ok(if kind.is_discrete() {
            Action::Discrete(rng.random_range(0..kind.action_dim()))
        } else {
            Action::Continuous((0..kind.action_dim()).map(|_| rng.random_range(-crate::env::ACTION_LIMIT..=crate::env::ACTION_LIMIT)).collect())
        })
    }
}
