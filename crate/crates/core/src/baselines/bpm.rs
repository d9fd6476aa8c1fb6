use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::BaselineError;
use crate::audio::MusicFeatureTrack;
use crate::env::{Action, AgentKind, EnvState, ACTION_LIMIT, ARM_LINKS};
use crate::rl::observation_frame;
use crate::FPS;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BpmControlConfig {
    pub tempo_bpm: f64,
    /// Quarter-note beat frames.
    pub beats: Vec<usize>,
    /// Targets are drawn uniformly from `[−limit, limit]` per joint.
    pub limit: f64,
    pub seed: u64,
}

impl BpmControlConfig {
    /// Uses the tracked beats, or a tempo grid from frame 0 when the track
    /// has none.
    pub fn from_music(music: &MusicFeatureTrack, seed: u64) -> Self {
        let beats = if music.beats.is_empty() {
            let period = 60.0 * FPS as f64 / music.tempo_bpm;
            (0..).map(|k| (k as f64 * period).round() as usize).take_while(|&b| b < music.frames).collect()
        } else {
            music.beats.clone()
        };
        Self { tempo_bpm: music.tempo_bpm, beats, limit: ACTION_LIMIT, seed }
    }

    pub fn validate(&self) -> Result<(), BaselineError> {
        if !(self.tempo_bpm > 0.0 && self.tempo_bpm.is_finite()) {
            return Err(BaselineError::InvalidConfig(format!("tempo must be positive, got {}", self.tempo_bpm)));
        }
        if !(self.limit > 0.0 && self.limit <= ACTION_LIMIT) {
            return Err(BaselineError::InvalidConfig(format!("target limit must lie in (0, {ACTION_LIMIT}]")));
        }
        Ok(())
    }
}

/// Zero-order hold of a joint-velocity target that is re-drawn whenever the
/// motion being commanded lands on a beat frame.
#[derive(Debug, Clone)]
pub struct BpmController {
    config: BpmControlConfig,
    rng: ChaCha8Rng,
    target: Vec<f64>,
    next_beat: usize,
}

impl BpmController {
    pub fn new(config: BpmControlConfig) -> Result<Self, BaselineError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let target = (0..ARM_LINKS).map(|_| rng.random_range(-config.limit..=config.limit)).collect();
        Ok(Self { config, rng, target, next_beat: 0 })
    }

    /// Action for the step whose motion appears at music frame `t`.
    pub fn action_at(&mut self, t: usize) -> Action {
        let beats = &self.config.beats;
        let mut hit = false;
        while self.next_beat < beats.len() && beats[self.next_beat] <= t {
            hit |= beats[self.next_beat] == t;
            self.next_beat += 1;
        }
        if hit {
            let l = self.config.limit;
            self.target = (0..ARM_LINKS).map(|_| self.rng.random_range(-l..=l)).collect();
        }
        Action::Continuous(self.target.clone())
    }
}

/// One BPM-control decision for `state`. Cart-pole is not supported.
pub fn bpm_control_policy(controller: &mut BpmController, state: &EnvState) -> Result<Action, BaselineError> {
    if state.kind != AgentKind::Arm {
        return Err(BaselineError::UnsupportedAgent(format!("{} agent", state.kind)));
    }
    Ok(controller.action_at(observation_frame(state)))
}

/// Frames at which the joint-velocity vector starts to change after being
/// constant, given per-frame velocities and the frame of the first row.
pub fn direction_change_frames(qdots: &[Vec<f64>], first_frame: usize, tol: f64) -> Vec<usize> {
    let changed = |k: usize| qdots[k].iter().zip(&qdots[k - 1]).any(|(a, b)| (a - b).abs() > tol);
    (1..qdots.len()).filter(|&k| changed(k) && (k < 2 || !changed(k - 1))).map(|k| first_frame + k).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(beats: Vec<usize>) -> BpmControlConfig {
        BpmControlConfig { tempo_bpm: 120.0, beats, limit: ACTION_LIMIT, seed: 3 }
    }

    #[test]
    fn holds_between_beats_and_resamples_on_beats() {
        let beats: Vec<usize> = (1..=100).map(|k| 30 * k).collect();
        let mut c = BpmController::new(cfg(beats.clone())).unwrap();
        let mut prev = c.action_at(0).to_vec();
        let mut same_on_beat = 0;
        for t in 1..=3000 {
            let a = c.action_at(t).to_vec();
            assert!(a.iter().all(|v| v.abs() <= ACTION_LIMIT));
            if beats.contains(&t) {
                same_on_beat += usize::from(a == prev);
            } else {
                assert_eq!(a, prev);
            }
            prev = a;
        }
        assert!(same_on_beat <= 1);
    }

    #[test]
    fn direction_change_onsets() {
        let q = |v: f64| vec![v, 0.0, 0.0];
        let rows = vec![q(0.0), q(0.0), q(0.5), q(0.9), q(0.9), q(0.9), q(0.3), q(0.3)];
        assert_eq!(direction_change_frames(&rows, 10, 1e-9), vec![12, 16]);
    }

    #[test]
    fn tempo_grid_fallback() {
        let music = MusicFeatureTrack { features: vec![], frames: 100, beats: vec![], peaks: vec![], tempo_bpm: 120.0, tempo_valid: true };
        assert_eq!(BpmControlConfig::from_music(&music, 0).beats, vec![0, 30, 60, 90]);
    }
}
