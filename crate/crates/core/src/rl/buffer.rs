use serde::{Deserialize, Serialize};

/// One environment's contiguous rollout segment. Observations are stored
/// flat, `obs_dim` values per step.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RolloutBuffer {
    pub obs_dim: usize,
    pub obs: Vec<f64>,
    pub actions: Vec<Vec<f64>>,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    pub rewards: Vec<f64>,
    /// Raw similarity (reward model) or matching score before shaping.
    pub raw: Vec<f64>,
    pub penalties: Vec<f64>,
    pub center_factors: Vec<f64>,
    pub dones: Vec<bool>,
    /// Done because the agent left the view, as opposed to a time or music
    /// limit.
    pub terminals: Vec<bool>,
    /// Value of the state following a truncated (non-terminal) done.
    pub truncation_values: Vec<f64>,
    /// Value of the state after the last step, for bootstrapping the tail.
    pub last_value: f64,
}

impl RolloutBuffer {
    pub fn new(obs_dim: usize) -> Self {
        Self { obs_dim, ..Default::default() }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn observation(&self, i: usize) -> &[f64] {
        &self.obs[i * self.obs_dim..(i + 1) * self.obs_dim]
    }

    /// Checks aligned lengths and finite rewards.
    pub fn validate(&self) -> bool {
        let n = self.len();
        self.obs.len() == n * self.obs_dim
            && [self.actions.len(), self.log_probs.len(), self.values.len(), self.raw.len(), self.penalties.len()]
                .iter()
                .chain(&[self.center_factors.len(), self.dones.len(), self.terminals.len(), self.truncation_values.len()])
                .all(|&l| l == n)
            && self.rewards.iter().all(|r| r.is_finite())
            && self.terminals.iter().zip(&self.dones).all(|(t, d)| !t || *d)
    }
}

/// Advantages and returns of one segment via the GAE recursion.
pub fn compute_gae(buf: &RolloutBuffer, gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let n = buf.len();
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let (next_value, carry) = if buf.dones[t] {
            (if buf.terminals[t] { 0.0 } else { buf.truncation_values[t] }, 0.0)
        } else if t + 1 < n {
            (buf.values[t + 1], 1.0)
        } else {
            (buf.last_value, 1.0)
        };
        let delta = buf.rewards[t] + gamma * next_value - buf.values[t];
        next_adv = delta + gamma * lambda * carry * next_adv;
        adv[t] = next_adv;
    }
    let returns = adv.iter().zip(&buf.values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

/// Rescales to zero mean and unit standard deviation.
pub fn normalize_advantages(adv: &mut [f64]) {
    let n = adv.len();
    if n < 2 {
        return;
    }
    let mean = adv.iter().sum::<f64>() / n as f64;
    let std = (adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    adv.iter_mut().for_each(|a| *a = (*a - mean) / (std + 1e-8));
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy(rewards: &[f64], values: &[f64], dones: &[bool], last: f64) -> RolloutBuffer {
        let n = rewards.len();
        RolloutBuffer {
            obs_dim: 1,
            obs: vec![0.0; n],
            actions: vec![vec![0.0]; n],
            log_probs: vec![0.0; n],
            values: values.to_vec(),
            rewards: rewards.to_vec(),
            raw: vec![0.0; n],
            penalties: vec![0.0; n],
            center_factors: vec![1.0; n],
            dones: dones.to_vec(),
            terminals: dones.to_vec(),
            truncation_values: vec![0.0; n],
            last_value: last,
        }
    }

    #[test]
    fn monte_carlo_identity_at_unit_gamma_lambda() {
        let b = toy(&[1.0, 2.0, 3.0], &[0.5, -1.0, 2.0], &[false, false, true], 9.0);
        let (adv, ret) = compute_gae(&b, 1.0, 1.0);
        assert_eq!(adv, vec![6.0 - 0.5, 5.0 + 1.0, 3.0 - 2.0]);
        assert_eq!(ret, vec![6.0, 5.0, 3.0]);
    }

    #[test]
    fn lambda_zero_is_one_step_td() {
        let b = toy(&[1.0, 2.0, 3.0], &[0.5, -1.0, 2.0], &[false, false, false], 4.0);
        let (adv, _) = compute_gae(&b, 0.9, 0.0);
        let expected = [1.0 + 0.9 * -1.0 - 0.5, 2.0 + 0.9 * 2.0 + 1.0, 3.0 + 0.9 * 4.0 - 2.0];
        for (a, e) in adv.iter().zip(expected) {
            assert!((a - e).abs() < 1e-12);
        }
        let z = toy(&[0.0; 4], &[0.0; 4], &[false; 4], 0.0);
        assert!(compute_gae(&z, 0.99, 0.95).0.iter().all(|&a| a == 0.0));
    }

    #[test]
    fn matches_brute_force_on_random_buffers() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let n = 20;
            let r: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let d: Vec<bool> = (0..n).map(|_| rng.random_bool(0.15)).collect();
            let mut b = toy(&r, &v, &d, rng.random_range(-1.0..1.0));
            b.terminals = d.iter().map(|&x| x && rng.random_bool(0.5)).collect();
            b.truncation_values = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (g, l) = (0.97, 0.9);
            let (adv, _) = compute_gae(&b, g, l);
            // Explicit double loop over the lambda-weighted TD errors.
            let next_v = |t: usize| {
                if b.dones[t] {
                    if b.terminals[t] { 0.0 } else { b.truncation_values[t] }
                } else if t + 1 < n {
                    v[t + 1]
                } else {
                    b.last_value
                }
            };
            for t in 0..n {
                let mut a = 0.0;
                let mut w = 1.0;
                for k in t..n {
                    a += w * (r[k] + g * next_v(k) - v[k]);
                    if b.dones[k] {
                        break;
                    }
                    w *= g * l;
                }
                assert!((a - adv[t]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn normalization() {
        let mut a = vec![1.0, 2.0, 3.0, 4.0];
        normalize_advantages(&mut a);
        assert!(a.iter().sum::<f64>().abs() < 1e-12);
        assert!((a.iter().map(|x| x * x).sum::<f64>() / 4.0 - 1.0).abs() < 1e-6);
    }
}
