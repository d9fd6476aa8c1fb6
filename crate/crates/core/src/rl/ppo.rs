use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::buffer::{compute_gae, normalize_advantages, RolloutBuffer};
use super::policy::Policy;
use super::RlError;
use crate::nn::{adam_step, AdamConfig, Grads};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip: f64,
    pub epochs: usize,
    /// Environment steps collected per iteration, across all environments.
    pub batch_size: usize,
    pub minibatch_size: usize,
    pub lr: f64,
    pub total_steps: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub max_grad_norm: f64,
    pub hidden: usize,
    /// Independent environment copies; each collects `batch_size / n_envs`
    /// steps per iteration with its own seed stream.
    pub n_envs: usize,
    /// Standardise observations with running statistics stored in the policy.
    pub normalize_observations: bool,
    /// Divide rewards by the running standard deviation of discounted returns.
    pub scale_rewards: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            gae_lambda: 0.95,
            clip: 0.2,
            epochs: 4,
            batch_size: 2048,
            minibatch_size: 256,
            lr: 1e-4,
            total_steps: 200_000,
            entropy_coef: 0.005,
            value_coef: 0.5,
            max_grad_norm: 0.5,
            hidden: 64,
            n_envs: 4,
            normalize_observations: true,
            scale_rewards: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), RlError> {
        let bad = |m: String| Err(RlError::InvalidConfig(m));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) || !(self.gae_lambda > 0.0 && self.gae_lambda <= 1.0) {
            return bad(format!("gamma and gae_lambda must lie in (0, 1], got {} and {}", self.gamma, self.gae_lambda));
        }
        if !(self.clip > 0.0 && self.clip <= 0.5) {
            return bad(format!("clip must lie in (0, 0.5], got {}", self.clip));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.minibatch_size == 0 || self.total_steps == 0 || self.hidden == 0 {
            return bad("epochs, batch_size, minibatch_size, total_steps and hidden must be positive".into());
        }
        if self.n_envs == 0 || self.n_envs > self.batch_size {
            return bad(format!("n_envs must lie in [1, batch_size], got {}", self.n_envs));
        }
        if !(self.lr > 0.0) || self.entropy_coef < 0.0 || self.value_coef < 0.0 || !(self.max_grad_norm > 0.0) {
            return bad("lr and max_grad_norm must be positive, coefficients non-negative".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PpoStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

/// Flattened training batch with advantages and returns.
#[derive(Debug, Clone)]
pub struct PpoBatch {
    pub obs_dim: usize,
    pub obs: Vec<f64>,
    pub actions: Vec<Vec<f64>>,
    pub log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl PpoBatch {
    /// GAE per segment, then advantage normalisation over the whole batch.
    pub fn from_buffers(buffers: &[RolloutBuffer], gamma: f64, lambda: f64) -> Self {
        let obs_dim = buffers.first().map_or(0, |b| b.obs_dim);
        let mut batch = PpoBatch { obs_dim, obs: Vec::new(), actions: Vec::new(), log_probs: Vec::new(), advantages: Vec::new(), returns: Vec::new() };
        for b in buffers {
            let (adv, ret) = compute_gae(b, gamma, lambda);
            batch.obs.extend_from_slice(&b.obs);
            batch.actions.extend(b.actions.iter().cloned());
            batch.log_probs.extend_from_slice(&b.log_probs);
            batch.advantages.extend(adv);
            batch.returns.extend(ret);
        }
        normalize_advantages(&mut batch.advantages);
        batch
    }

    pub fn len(&self) -> usize {
        self.returns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.returns.is_empty()
    }

    fn subset(&self, idx: &[usize]) -> PpoBatch {
        let d = self.obs_dim;
        PpoBatch {
            obs_dim: d,
            obs: idx.iter().flat_map(|&i| self.obs[i * d..(i + 1) * d].iter().copied()).collect(),
            actions: idx.iter().map(|&i| self.actions[i].clone()).collect(),
            log_probs: idx.iter().map(|&i| self.log_probs[i]).collect(),
            advantages: idx.iter().map(|&i| self.advantages[i]).collect(),
            returns: idx.iter().map(|&i| self.returns[i]).collect(),
        }
    }
}

/// Clipped surrogate term `min(r·A, clip(r, 1−ε, 1+ε)·A)` and its
/// derivative with respect to `r`.
pub fn clipped_surrogate(ratio: f64, adv: f64, eps: f64) -> (f64, f64) {
    let unclipped = ratio * adv;
    let clipped = ratio.clamp(1.0 - eps, 1.0 + eps) * adv;
    if unclipped <= clipped {
        (unclipped, adv)
    } else {
        (clipped, 0.0)
    }
}

/// PPO objective (to be minimised) on a minibatch and its gradient:
/// `−mean(surrogate) + c_v·mean((V − R)²) − c_e·mean(entropy)`.
pub fn ppo_loss(policy: &Policy, batch: &PpoBatch, cfg: &TrainConfig) -> Result<(f64, PpoStats, Grads), RlError> {
    let n = batch.len();
    if n == 0 {
        return Err(RlError::EmptyBuffer);
    }
    let (out, cache) = policy.forward(&batch.obs, n)?;
    let a = policy.action_dim();
    let ls_dim = out.log_std.len();
    let mut d_head = vec![0.0; n * a];
    let mut d_value = vec![0.0; n];
    let mut d_log_std = vec![0.0; ls_dim];
    let mut stats = PpoStats::default();
    let inv = 1.0 / n as f64;
    for i in 0..n {
        let head = out.row(i);
        let logp = policy.log_prob(head, &out.log_std, &batch.actions[i]);
        let ratio = (logp - batch.log_probs[i]).exp();
        let (surr, dsurr_dratio) = clipped_surrogate(ratio, batch.advantages[i], cfg.clip);
        let ent = policy.entropy(head, &out.log_std);
        let verr = out.values[i] - batch.returns[i];
        stats.policy_loss -= surr * inv;
        stats.value_loss += verr * verr * inv;
        stats.entropy += ent * inv;
        stats.approx_kl += (batch.log_probs[i] - logp) * inv;
        if (ratio - 1.0).abs() > cfg.clip {
            stats.clip_fraction += inv;
        }
        let g = policy.head_grads(head, &out.log_std, &batch.actions[i]);
        // d(−surr)/dlogp = −dsurr/dr · r
        let dlogp = -dsurr_dratio * ratio * inv;
        let dent = -cfg.entropy_coef * inv;
        for k in 0..a {
            d_head[i * a + k] = dlogp * g.dlogp_head[k] + dent * g.dent_head[k];
        }
        for k in 0..ls_dim {
            d_log_std[k] += dlogp * g.dlogp_log_std[k] + dent * g.dent_log_std[k];
        }
        d_value[i] = cfg.value_coef * 2.0 * verr * inv;
    }
    let loss = stats.policy_loss + cfg.value_coef * stats.value_loss - cfg.entropy_coef * stats.entropy;
    let mut grads = policy.store.zero_grads();
    policy.backward(&cache, &d_head, &d_value, &d_log_std, &mut grads)?;
    Ok((loss, stats, grads))
}

/// Minibatch Adam over `cfg.epochs` passes; returns the mean statistics of
/// the last epoch.
pub fn ppo_update<R: Rng>(policy: &mut Policy, batch: &PpoBatch, cfg: &TrainConfig, rng: &mut R) -> Result<PpoStats, RlError> {
    if batch.is_empty() {
        return Err(RlError::EmptyBuffer);
    }
    let adam = AdamConfig::with_lr(cfg.lr);
    let mut order: Vec<usize> = (0..batch.len()).collect();
    let mut last = PpoStats::default();
    for epoch in 0..cfg.epochs {
        order.shuffle(rng);
        let mut acc = PpoStats::default();
        let chunks: Vec<&[usize]> = order.chunks(cfg.minibatch_size).collect();
        for (mb, idx) in chunks.iter().enumerate() {
            let sub = batch.subset(idx);
            let (loss, stats, mut grads) = ppo_loss(policy, &sub, cfg)?;
            if !loss.is_finite() {
                return Err(RlError::NonFiniteLoss { epoch, minibatch: mb, detail: format!("{stats:?}") });
            }
            grads.clip_global_norm(cfg.max_grad_norm);
            adam_step(&mut policy.store, &grads, &adam)?;
            policy.clamp_log_std();
            let w = idx.len() as f64 / batch.len() as f64;
            acc.policy_loss += stats.policy_loss * w;
            acc.value_loss += stats.value_loss * w;
            acc.entropy += stats.entropy * w;
            acc.approx_kl += stats.approx_kl * w;
            acc.clip_fraction += stats.clip_fraction * w;
        }
        last = acc;
    }
    Ok(last)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::AgentKind;
    use crate::nn::grad_check;
    use crate::rl::policy::ObservationKind;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_batch(policy: &Policy, n: usize, seed: u64) -> PpoBatch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = policy.meta.obs_dim;
        let obs: Vec<f64> = (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (out, _) = policy.forward(&obs, n).unwrap();
        let mut actions = Vec::new();
        let mut log_probs = Vec::new();
        for i in 0..n {
            let (_, a) = policy.sample(out.row(i), &out.log_std, &mut rng);
            // Perturb the behaviour log-prob so ratios differ from 1.
            log_probs.push(policy.log_prob(out.row(i), &out.log_std, &a) + rng.random_range(-0.3..0.3));
            actions.push(a);
        }
        PpoBatch {
            obs_dim: d,
            obs,
            actions,
            log_probs,
            advantages: (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
            returns: (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
        }
    }

    #[test]
    fn surrogate_clipping() {
        assert_eq!(clipped_surrogate(1.5, 2.0, 0.2).0, 1.2 * 2.0);
        assert_eq!(clipped_surrogate(1.5, 2.0, 0.2).1, 0.0);
        assert_eq!(clipped_surrogate(0.5, -1.0, 0.2).0, -0.8);
        assert_eq!(clipped_surrogate(1.5, -1.0, 0.2), (-1.5, -1.0));
        assert_eq!(clipped_surrogate(1.0, 0.7, 0.2), (0.7, 0.7));
    }

    #[test]
    fn ratio_one_gives_negative_mean_advantage() {
        let p = Policy::new(AgentKind::CartPole, 6, 16, ObservationKind::MusicEmbedding, 5).unwrap();
        let mut b = random_batch(&p, 32, 1);
        let (out, _) = p.forward(&b.obs, 32).unwrap();
        for i in 0..32 {
            b.log_probs[i] = p.log_prob(out.row(i), &out.log_std, &b.actions[i]);
        }
        let cfg = TrainConfig::default();
        let (_, stats, _) = ppo_loss(&p, &b, &cfg).unwrap();
        let mean_adv = b.advantages.iter().sum::<f64>() / 32.0;
        assert!((stats.policy_loss + mean_adv).abs() < 1e-12);
        assert!(stats.approx_kl.abs() < 1e-12);
        assert_eq!(stats.clip_fraction, 0.0);
    }

    #[test]
    fn zero_advantages_leave_only_value_and_entropy() {
        let p = Policy::new(AgentKind::CartPole, 6, 16, ObservationKind::MusicEmbedding, 6).unwrap();
        let mut b = random_batch(&p, 16, 2);
        b.advantages.iter_mut().for_each(|a| *a = 0.0);
        let cfg = TrainConfig { entropy_coef: 0.0, ..Default::default() };
        let (_, stats, grads) = ppo_loss(&p, &b, &cfg).unwrap();
        assert_eq!(stats.policy_loss, 0.0);
        let pi = p.store.id("pi.weight").unwrap();
        assert!(grads.get(pi).data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        for (kind, seed) in [(AgentKind::CartPole, 7u64), (AgentKind::Arm, 8)] {
            let mut p = Policy::new(kind, 5, 8, ObservationKind::MusicEmbedding, seed).unwrap();
            // Spread the head so gradients are not dominated by the tiny init.
            let w = p.store.id("pi.weight").unwrap();
            p.store.get_mut(w).data_mut().iter_mut().for_each(|v| *v *= 50.0);
            let b = random_batch(&p, 12, seed);
            // A large clip keeps every ratio inside the smooth region.
            let cfg = TrainConfig { clip: 0.5, entropy_coef: 0.05, ..Default::default() };
            let theta = p.store.flatten();
            let err = grad_check(
                |x| {
                    p.store.unflatten(x);
                    let (l, _, g) = ppo_loss(&p, &b, &cfg).unwrap();
                    (l, g.flatten())
                },
                &theta,
            );
            assert!(err < 1e-4, "{kind}: {err}");
        }
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { clip: 0.6, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { gamma: 0.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { n_envs: 0, ..Default::default() }.validate().is_err());
    }
}
