use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::buffer::RolloutBuffer;
use super::policy::{ObsNorm, ObservationKind, Policy};
use super::ppo::{ppo_update, PpoBatch, TrainConfig};
use super::rollout::{Collector, DanceTask, RewardModelTask};
use super::RlError;
use crate::audio::MusicFeatureTrack;
use crate::derive_seed;
use crate::env::{Env, EnvConfig};
use crate::par::parallel_map;
use crate::reward::RewardModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub iteration: usize,
    pub steps: usize,
    pub mean_reward: f64,
    pub mean_raw: f64,
    pub episodes: usize,
    pub mean_ep_len: f64,
    pub view_exit_fraction: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LearningCurve {
    pub rows: Vec<CurveRow>,
}

impl LearningCurve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("iteration,steps,mean_reward,mean_raw,episodes,mean_ep_len,view_exit_fraction,policy_loss,value_loss,entropy,approx_kl\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                r.iteration, r.steps, r.mean_reward, r.mean_raw, r.episodes, r.mean_ep_len, r.view_exit_fraction, r.policy_loss, r.value_loss, r.entropy, r.approx_kl
            ));
        }
        s
    }
}

/// Tracks each environment's running discounted return and rescales
/// rewards by the standard deviation of all returns seen so far.
#[derive(Debug, Clone)]
pub struct ReturnScaler {
    gamma: f64,
    returns: Vec<f64>,
    count: f64,
    mean: f64,
    m2: f64,
}

impl ReturnScaler {
    pub fn new(n_envs: usize, gamma: f64) -> Self {
        Self { gamma, returns: vec![0.0; n_envs], count: 0.0, mean: 0.0, m2: 0.0 }
    }

    pub fn std(&self) -> f64 {
        if self.count < 2.0 {
            1.0
        } else {
            (self.m2 / self.count).sqrt()
        }
    }

    /// Updates the statistics with every step of `buffers` (one per
    /// environment, in order), then divides their rewards by the return
    /// standard deviation. Stored values and truncation bootstraps already
    /// come from the value head, which learns the scaled returns.
    pub fn scale(&mut self, buffers: &mut [RolloutBuffer]) {
        for (b, ret) in buffers.iter().zip(self.returns.iter_mut()) {
            for (r, &done) in b.rewards.iter().zip(&b.dones) {
                *ret = *ret * self.gamma + r;
                self.count += 1.0;
                let d = *ret - self.mean;
                self.mean += d / self.count;
                self.m2 += d * (*ret - self.mean);
                if done {
                    *ret = 0.0;
                }
            }
        }
        let s = self.std().max(1e-8);
        for b in buffers.iter_mut() {
            b.rewards.iter_mut().for_each(|r| *r /= s);
        }
    }
}

/// PPO loop over any dancing task: collect `batch_size` steps split across
/// `n_envs` collectors (run on up to `workers` threads; results do not
/// depend on the thread count), then update.
pub fn train_on_task<T: DanceTask>(
    task: &T,
    env_config: &EnvConfig,
    observation: ObservationKind,
    cfg: &TrainConfig,
    workers: usize,
    mut on_iteration: impl FnMut(&CurveRow),
) -> Result<(Policy, LearningCurve), RlError> {
    cfg.validate()?;
    if task.tracks().is_empty() {
        return Err(RlError::NoMusic);
    }
    let kind = env_config.kind;
    let obs_dim = task.obs_dim(kind.state_dim());
    let mut policy = Policy::new(kind, obs_dim, cfg.hidden, observation, derive_seed(cfg.seed, 0x9011c7))?;
    if cfg.normalize_observations {
        policy.meta.obs_norm = Some(ObsNorm::new(obs_dim));
    }
    let mut scaler = ReturnScaler::new(cfg.n_envs, cfg.gamma);
    let env = Env::new(*env_config);
    let mut collectors: Vec<Collector> = (0..cfg.n_envs).map(|i| Collector::new(env.clone(), derive_seed(cfg.seed, 100 + i as u64))).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 0x0b7));
    let per_env = cfg.batch_size / cfg.n_envs;
    let extra = cfg.batch_size % cfg.n_envs;
    let mut curve = LearningCurve::default();
    let mut steps = 0;
    let mut iteration = 0;
    while steps < cfg.total_steps {
        iteration += 1;
        let jobs: Vec<(usize, Collector)> = collectors.into_iter().enumerate().collect();
        let results = parallel_map(jobs, workers, |_, (i, mut c)| {
            let n = per_env + usize::from(i < extra);
            let r = c.collect(&policy, task, n);
            (c, r)
        });
        collectors = Vec::with_capacity(cfg.n_envs);
        let mut buffers = Vec::with_capacity(cfg.n_envs);
        let mut episodes = Vec::new();
        for (c, r) in results {
            collectors.push(c);
            let (b, e) = r?;
            buffers.push(b);
            episodes.extend(e);
        }
        let n: usize = buffers.iter().map(|b| b.len()).sum();
        steps += n;
        let mean = |f: &dyn Fn(&RolloutBuffer) -> f64| buffers.iter().map(f).sum::<f64>() / n as f64;
        let mean_reward = mean(&|b| b.rewards.iter().sum());
        let mean_raw = mean(&|b| b.raw.iter().sum());
        if cfg.scale_rewards {
            scaler.scale(&mut buffers);
        }
        let batch = PpoBatch::from_buffers(&buffers, cfg.gamma, cfg.gae_lambda);
        let stats = ppo_update(&mut policy, &batch, cfg, &mut rng)?;
        // Statistics change only between iterations, so collection and the
        // update always see the same normalisation.
        if let Some(norm) = policy.meta.obs_norm.as_mut() {
            for b in &buffers {
                norm.update(&b.obs, b.len());
            }
        }
        let ne = episodes.len();
        let row = CurveRow {
            iteration,
            steps,
            mean_reward,
            mean_raw,
            episodes: ne,
            mean_ep_len: if ne > 0 { episodes.iter().map(|e| e.length as f64).sum::<f64>() / ne as f64 } else { 0.0 },
            view_exit_fraction: if ne > 0 { episodes.iter().filter(|e| e.view_exit).count() as f64 / ne as f64 } else { 0.0 },
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
            entropy: stats.entropy,
            approx_kl: stats.approx_kl,
        };
        on_iteration(&row);
        curve.rows.push(row);
    }
    Ok((policy, curve))
}

/// Trains a dancer against a frozen reward model and verifies that the
/// model's parameters are unchanged afterwards.
pub fn train_dancer(
    model: &RewardModel,
    tracks: &[MusicFeatureTrack],
    env_config: &EnvConfig,
    cfg: &TrainConfig,
    workers: usize,
    on_iteration: impl FnMut(&CurveRow),
) -> Result<(Policy, LearningCurve), RlError> {
    cfg.validate()?;
    if env_config.half_window != model.config.half_window {
        return Err(RlError::InvalidConfig(format!(
            "environment half window {} differs from the reward model's {}",
            env_config.half_window, model.config.half_window
        )));
    }
    let before = model.content_hash();
    let task = RewardModelTask::new(model, tracks, workers)?;
    let (mut policy, curve) = train_on_task(&task, env_config, ObservationKind::MusicEmbedding, cfg, workers, on_iteration)?;
    let after = model.content_hash();
    if before != after {
        return Err(RlError::RewardModelModified { before, after });
    }
    policy.meta.reward_model = Some(after);
    Ok((policy, curve))
}
