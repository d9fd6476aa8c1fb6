use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::RlError;
use crate::env::{Action, AgentKind};
use crate::nn::{
    decode_checkpoint, encode_checkpoint, gelu, gelu_backward, Dense, Grads, ParamId, ParamStore, Tensor,
};

pub const POLICY_KIND: &str = "policy";
pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;
const INIT_LOG_STD: f64 = -0.5;
const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// What the policy observes alongside the agent state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationKind {
    /// Music-encoder representation `h^m`.
    MusicEmbedding,
    /// Raw 35-dim music feature row.
    RawMusic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyMeta {
    pub agent: AgentKind,
    pub obs_dim: usize,
    pub hidden: usize,
    pub observation: ObservationKind,
    /// Content hash of the reward model the policy was trained against.
    pub reward_model: Option<String>,
    /// Running observation statistics applied before the trunk.
    #[serde(default)]
    pub obs_norm: Option<ObsNorm>,
}

/// Per-dimension running mean and variance (parallel Welford merge).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObsNorm {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub count: f64,
}

pub const OBS_CLIP: f64 = 10.0;

impl ObsNorm {
    pub fn new(dim: usize) -> Self {
        Self { mean: vec![0.0; dim], var: vec![1.0; dim], count: 1e-4 }
    }

    /// Merges the statistics of `n` flat observations.
    pub fn update(&mut self, obs: &[f64], n: usize) {
        let d = self.mean.len();
        if n == 0 || obs.len() != n * d {
            return;
        }
        let nb = n as f64;
        let total = self.count + nb;
        for j in 0..d {
            let bm = (0..n).map(|i| obs[i * d + j]).sum::<f64>() / nb;
            let bv = (0..n).map(|i| (obs[i * d + j] - bm).powi(2)).sum::<f64>() / nb;
            let delta = bm - self.mean[j];
            let m2 = self.var[j] * self.count + bv * nb + delta * delta * self.count * nb / total;
            self.mean[j] += delta * nb / total;
            self.var[j] = m2 / total;
        }
        self.count = total;
    }

    pub fn apply(&self, obs: &[f64]) -> Vec<f64> {
        let d = self.mean.len();
        obs.iter()
            .enumerate()
            .map(|(k, &o)| ((o - self.mean[k % d]) / (self.var[k % d] + 1e-8).sqrt()).clamp(-OBS_CLIP, OBS_CLIP))
            .collect()
    }
}

/// Shared two-layer GELU trunk with a policy head (categorical logits or
/// Gaussian mean with state-independent log-std) and a value head.
#[derive(Debug, Clone)]
pub struct Policy {
    pub meta: PolicyMeta,
    pub store: ParamStore,
    fc1: Dense,
    fc2: Dense,
    pi: Dense,
    vf: Dense,
    log_std: Option<ParamId>,
}

#[derive(Debug, Clone)]
pub struct PolicyCache {
    obs: Tensor,
    pre1: Tensor,
    act1: Tensor,
    pre2: Tensor,
    act2: Tensor,
}

/// Batched policy outputs: head rows `[N, A]` and values `[N]`.
#[derive(Debug, Clone)]
pub struct PolicyOutput {
    pub head: Vec<f64>,
    pub values: Vec<f64>,
    pub log_std: Vec<f64>,
    pub action_dim: usize,
}

impl PolicyOutput {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.head[i * self.action_dim..(i + 1) * self.action_dim]
    }
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    logits.iter().map(|v| v - lse).collect()
}

impl Policy {
    pub fn new(agent: AgentKind, obs_dim: usize, hidden: usize, observation: ObservationKind, seed: u64) -> Result<Self, RlError> {
        if obs_dim == 0 || hidden == 0 {
            return Err(RlError::InvalidConfig("policy dimensions must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let a = agent.action_dim();
        Dense::new(&mut store, "trunk.fc1", obs_dim, hidden, &mut rng)?;
        Dense::new(&mut store, "trunk.fc2", hidden, hidden, &mut rng)?;
        let pi = Dense::new(&mut store, "pi", hidden, a, &mut rng)?;
        Dense::new(&mut store, "vf", hidden, 1, &mut rng)?;
        // Small initial head so the untrained policy is near uniform / zero mean.
        store.get_mut(pi.weight).data_mut().iter_mut().for_each(|w| *w *= 0.01);
        if !agent.is_discrete() {
            store.add_constant("log_std", &[a], INIT_LOG_STD)?;
        }
        let meta = PolicyMeta { agent, obs_dim, hidden, observation, reward_model: None, obs_norm: None };
        Self::bind(meta, store)
    }

    fn bind(meta: PolicyMeta, store: ParamStore) -> Result<Self, RlError> {
        let fc1 = Dense::bind(&store, "trunk.fc1")?;
        let fc2 = Dense::bind(&store, "trunk.fc2")?;
        let pi = Dense::bind(&store, "pi")?;
        let vf = Dense::bind(&store, "vf")?;
        let log_std = if meta.agent.is_discrete() { None } else { Some(store.id("log_std")?) };
        if meta.obs_norm.as_ref().is_some_and(|o| o.mean.len() != meta.obs_dim || o.var.len() != meta.obs_dim) {
            return Err(RlError::InvalidConfig("observation statistics do not match the observation size".into()));
        }
        if fc1.inputs != meta.obs_dim || fc1.outputs != meta.hidden || pi.outputs != meta.agent.action_dim() || vf.outputs != 1 {
            return Err(RlError::InvalidConfig("policy tensors do not match the stored metadata".into()));
        }
        Ok(Self { meta, store, fc1, fc2, pi, vf, log_std })
    }

    pub fn action_dim(&self) -> usize {
        self.meta.agent.action_dim()
    }

    pub fn log_std(&self) -> Vec<f64> {
        match self.log_std {
            Some(id) => self.store.get(id).data().iter().map(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX)).collect(),
            None => Vec::new(),
        }
    }

    /// Keeps the raw log-std parameter inside its clamp range.
    pub fn clamp_log_std(&mut self) {
        if let Some(id) = self.log_std {
            self.store.get_mut(id).data_mut().iter_mut().for_each(|v| *v = v.clamp(LOG_STD_MIN, LOG_STD_MAX));
        }
    }

    pub fn forward(&self, obs: &[f64], n: usize) -> Result<(PolicyOutput, PolicyCache), RlError> {
        if obs.len() != n * self.meta.obs_dim {
            return Err(RlError::ObservationSize { got: obs.len() / n.max(1), expected: self.meta.obs_dim });
        }
        let obs = match &self.meta.obs_norm {
            Some(norm) => norm.apply(obs),
            None => obs.to_vec(),
        };
        let obs = Tensor::from_vec(&[n, self.meta.obs_dim], obs)?;
        let pre1 = self.fc1.forward(&self.store, &obs)?;
        let act1 = Tensor::from_vec(pre1.shape(), gelu(pre1.data()))?;
        let pre2 = self.fc2.forward(&self.store, &act1)?;
        let act2 = Tensor::from_vec(pre2.shape(), gelu(pre2.data()))?;
        let head = self.pi.forward(&self.store, &act2)?.into_vec();
        let values = self.vf.forward(&self.store, &act2)?.into_vec();
        let out = PolicyOutput { head, values, log_std: self.log_std(), action_dim: self.action_dim() };
        Ok((out, PolicyCache { obs, pre1, act1, pre2, act2 }))
    }

    /// Backpropagates head, value and log-std gradients.
    pub fn backward(&self, cache: &PolicyCache, d_head: &[f64], d_value: &[f64], d_log_std: &[f64], grads: &mut Grads) -> Result<(), RlError> {
        let n = cache.obs.dim(0);
        let dh = Tensor::from_vec(&[n, self.action_dim()], d_head.to_vec())?;
        let dv = Tensor::from_vec(&[n, 1], d_value.to_vec())?;
        let mut da2 = self.pi.backward(&self.store, &cache.act2, &dh, grads)?;
        da2.add_assign(&self.vf.backward(&self.store, &cache.act2, &dv, grads)?);
        let dp2 = Tensor::from_vec(da2.shape(), gelu_backward(cache.pre2.data(), da2.data()))?;
        let da1 = self.fc2.backward(&self.store, &cache.act1, &dp2, grads)?;
        let dp1 = Tensor::from_vec(da1.shape(), gelu_backward(cache.pre1.data(), da1.data()))?;
        self.fc1.backward(&self.store, &cache.obs, &dp1, grads)?;
        if let Some(id) = self.log_std {
            let raw = self.store.get(id).data().to_vec();
            let g = grads.get_mut(id).data_mut();
            for i in 0..g.len() {
                if (LOG_STD_MIN..=LOG_STD_MAX).contains(&raw[i]) {
                    g[i] += d_log_std[i];
                }
            }
        }
        Ok(())
    }

    /// Log-probability of a stored action (class index or raw Gaussian sample).
    pub fn log_prob(&self, head: &[f64], log_std: &[f64], action: &[f64]) -> f64 {
        if self.meta.agent.is_discrete() {
            log_softmax(head)[action[0] as usize]
        } else {
            head.iter()
                .zip(log_std)
                .zip(action)
                .map(|((m, ls), a)| {
                    let z = (a - m) / ls.exp();
                    -0.5 * z * z - ls - 0.5 * LN_2PI
                })
                .sum()
        }
    }

    pub fn entropy(&self, head: &[f64], log_std: &[f64]) -> f64 {
        if self.meta.agent.is_discrete() {
            let lp = log_softmax(head);
            -lp.iter().map(|l| l.exp() * l).sum::<f64>()
        } else {
            log_std.iter().map(|ls| 0.5 * (LN_2PI + 1.0) + ls).sum()
        }
    }

    /// Gradients of `log π(a)` and of the entropy with respect to the head
    /// row and the log-std.
    pub(crate) fn head_grads(&self, head: &[f64], log_std: &[f64], action: &[f64]) -> HeadGrads {
        if self.meta.agent.is_discrete() {
            let lp = log_softmax(head);
            let p: Vec<f64> = lp.iter().map(|l| l.exp()).collect();
            let h = -p.iter().zip(&lp).map(|(a, b)| a * b).sum::<f64>();
            let a = action[0] as usize;
            let dlogp = p.iter().enumerate().map(|(j, pj)| if j == a { 1.0 - pj } else { -pj }).collect();
            let dent = p.iter().zip(&lp).map(|(pj, lj)| -pj * (lj + h)).collect();
            HeadGrads { dlogp_head: dlogp, dlogp_log_std: Vec::new(), dent_head: dent, dent_log_std: Vec::new() }
        } else {
            let mut dh = Vec::with_capacity(head.len());
            let mut dls = Vec::with_capacity(head.len());
            for ((m, ls), a) in head.iter().zip(log_std).zip(action) {
                let var = (2.0 * ls).exp();
                dh.push((a - m) / var);
                dls.push((a - m).powi(2) / var - 1.0);
            }
            HeadGrads { dlogp_head: dh, dlogp_log_std: dls, dent_head: vec![0.0; head.len()], dent_log_std: vec![1.0; log_std.len()] }
        }
    }

    /// Samples an action; returns it with its stored numeric form.
    pub fn sample<R: Rng>(&self, head: &[f64], log_std: &[f64], rng: &mut R) -> (Action, Vec<f64>) {
        if self.meta.agent.is_discrete() {
            let lp = log_softmax(head);
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut pick = lp.len() - 1;
            for (i, l) in lp.iter().enumerate() {
                acc += l.exp();
                if u < acc {
                    pick = i;
                    break;
                }
            }
            (Action::Discrete(pick), vec![pick as f64])
        } else {
            let a: Vec<f64> = head
                .iter()
                .zip(log_std)
                .map(|(m, ls)| {
                    let e: f64 = rng.sample(StandardNormal);
                    m + ls.exp() * e
                })
                .collect();
            (Action::Continuous(a.clone()), a)
        }
    }

    /// Most likely action.
    pub fn mode(&self, head: &[f64]) -> (Action, Vec<f64>) {
        if self.meta.agent.is_discrete() {
            let best = head.iter().enumerate().fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc }).0;
            (Action::Discrete(best), vec![best as f64])
        } else {
            (Action::Continuous(head.to_vec()), head.to_vec())
        }
    }

    pub fn to_bytes(&self, seed: u64) -> Result<Vec<u8>, RlError> {
        let hp = serde_json::to_value(&self.meta).expect("policy metadata serializes");
        Ok(encode_checkpoint(&self.store, POLICY_KIND, hp, seed)?)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, RlError> {
        let (store, ck) = decode_checkpoint(bytes)?;
        if ck.kind != POLICY_KIND {
            return Err(RlError::InvalidConfig(format!("checkpoint is a {:?}, not a policy", ck.kind)));
        }
        let meta: PolicyMeta =
            serde_json::from_value(ck.hyperparams).map_err(|e| RlError::InvalidConfig(format!("policy metadata: {e}")))?;
        Self::bind(meta, store)
    }

    pub fn save(&self, path: &std::path::Path, seed: u64) -> Result<(), RlError> {
        std::fs::write(path, self.to_bytes(seed)?).map_err(|source| RlError::Io { path: path.display().to_string(), source })
    }

    pub fn load(path: &std::path::Path) -> Result<Self, RlError> {
        let bytes = std::fs::read(path).map_err(|source| RlError::Io { path: path.display().to_string(), source })?;
        Self::from_bytes(&bytes)
    }
}

pub(crate) struct HeadGrads {
    pub dlogp_head: Vec<f64>,
    pub dlogp_log_std: Vec<f64>,
    pub dent_head: Vec<f64>,
    pub dent_log_std: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn obs_norm_matches_direct_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = 3;
        let batches: Vec<Vec<f64>> = [5usize, 17, 1, 40]
            .iter()
            .map(|&n| (0..n * d).map(|k| rng.random_range(-4.0..4.0) + (k % d) as f64 * 10.0).collect())
            .collect();
        let mut norm = ObsNorm { mean: vec![0.0; d], var: vec![1.0; d], count: 0.0 };
        for b in &batches {
            norm.update(b, b.len() / d);
        }
        let all: Vec<f64> = batches.concat();
        let n = all.len() / d;
        for j in 0..d {
            let col: Vec<f64> = (0..n).map(|i| all[i * d + j]).collect();
            let m = col.iter().sum::<f64>() / n as f64;
            let v = col.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n as f64;
            assert!((norm.mean[j] - m).abs() < 1e-10 && (norm.var[j] - v).abs() < 1e-9);
        }
        assert_eq!(norm.count, n as f64);
        let z = norm.apply(&all[..d]);
        for j in 0..d {
            assert!((z[j] - (all[j] - norm.mean[j]) / (norm.var[j] + 1e-8).sqrt()).abs() < 1e-12);
        }
        assert!(norm.apply(&[1e9, 0.0, 0.0])[0] == OBS_CLIP);
    }

    #[test]
    fn obs_norm_survives_checkpoint() {
        let mut p = Policy::new(AgentKind::Arm, 4, 8, ObservationKind::RawMusic, 1).unwrap();
        let mut norm = ObsNorm::new(4);
        norm.update(&[1.0, 2.0, 3.0, 4.0, 0.0, 0.0, 1.0, 9.0], 2);
        p.meta.obs_norm = Some(norm);
        let q = Policy::from_bytes(&p.to_bytes(0).unwrap()).unwrap();
        assert_eq!(q.meta, p.meta);
        let o = [0.5, -1.0, 2.0, 7.0];
        let (a, b) = (p.forward(&o, 1).unwrap().0.head, q.forward(&o, 1).unwrap().0.head);
        assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-6));
        p.meta.obs_norm = Some(ObsNorm::new(3));
        assert!(Policy::from_bytes(&p.to_bytes(0).unwrap()).is_err());
    }

    #[test]
    fn discrete_distribution_basics() {
        let p = Policy::new(AgentKind::CartPole, 5, 8, ObservationKind::MusicEmbedding, 1).unwrap();
        let head = [0.3, -0.2];
        let total: f64 = (0..2).map(|a| p.log_prob(&head, &[], &[a as f64]).exp()).sum();
        assert!((total - 1.0).abs() < 1e-12);
        let e = p.entropy(&[0.0, 0.0], &[]);
        assert!((e - 2f64.ln()).abs() < 1e-12);
        assert_eq!(p.mode(&head).0, Action::Discrete(0));
    }

    #[test]
    fn gaussian_log_prob_matches_density() {
        let p = Policy::new(AgentKind::Arm, 4, 8, ObservationKind::RawMusic, 2).unwrap();
        let lp = p.log_prob(&[0.1, 0.0, -0.2], &[0.0, -1.0, 0.5], &[0.3, 0.1, -0.2]);
        let oracle: f64 = [(0.1f64, 0.0f64, 0.3f64), (0.0, -1.0, 0.1), (-0.2, 0.5, -0.2)]
            .iter()
            .map(|&(m, ls, a)| {
                let s = ls.exp();
                ((-(a - m).powi(2) / (2.0 * s * s)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())).ln()
            })
            .sum();
        assert!((lp - oracle).abs() < 1e-12);
        let ent = p.entropy(&[0.0; 3], &[0.0, 0.0, 0.0]);
        assert!((ent - 1.5 * (1.0 + (2.0 * std::f64::consts::PI).ln())).abs() < 1e-12);
    }

    #[test]
    fn log_std_is_clamped() {
        let mut p = Policy::new(AgentKind::Arm, 4, 8, ObservationKind::RawMusic, 3).unwrap();
        let id = p.store.id("log_std").unwrap();
        p.store.get_mut(id).data_mut().copy_from_slice(&[-9.0, 0.0, 7.0]);
        assert_eq!(p.log_std(), vec![-5.0, 0.0, 2.0]);
        p.clamp_log_std();
        assert_eq!(p.store.get(id).data(), &[-5.0, 0.0, 2.0]);
    }

    #[test]
    fn checkpoint_roundtrip() {
        let p = Policy::new(AgentKind::Arm, 7, 16, ObservationKind::MusicEmbedding, 4).unwrap();
        let bytes = p.to_bytes(4).unwrap();
        let q = Policy::from_bytes(&bytes).unwrap();
        assert_eq!(q.meta, p.meta);
        assert_eq!(q.to_bytes(4).unwrap(), bytes);
    }
}
