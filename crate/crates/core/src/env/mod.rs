//! Simulated dancers: a cart-pole with discrete pushes and a planar 3-link
//! arm driven by joint-velocity commands. Both step at 60 Hz.

mod arm;
mod cartpole;
pub mod render;
mod traj;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::MusicFeatureTrack;
use crate::container::ContainerError;
use crate::frame::Frame;

pub use arm::{ArmParams, ACTION_LIMIT, ARM_LINKS};
pub use cartpole::CartPoleParams;
pub use traj::{read_traj, write_traj, TrajHeader, TrajRow, Trajectory, TRJ_MAGIC};

pub const DT: f64 = 1.0 / 60.0;
pub const EPISODE_CAP: usize = 1000;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("music track has {frames} frames, need more than {needed}")]
    MusicTooShort { frames: usize, needed: usize },
    #[error("invalid action for {kind}: {detail}")]
    InvalidAction { kind: AgentKind, detail: String },
    #[error("non-finite state after step {0}")]
    NonFinite(usize),
    #[error("unknown agent kind {0:?}")]
    UnknownAgent(String),
    #[error("trajectory: {0}")]
    Trajectory(String),
    #[error(transparent)]
    Container(#[from] ContainerError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    CartPole,
    Arm,
}

impl AgentKind {
    pub fn state_dim(self) -> usize {
        match self {
            AgentKind::CartPole => 4,
            AgentKind::Arm => 2 * ARM_LINKS,
        }
    }

    /// Number of discrete actions, or the continuous action dimension.
    pub fn action_dim(self) -> usize {
        match self {
            AgentKind::CartPole => 2,
            AgentKind::Arm => ARM_LINKS,
        }
    }

    pub fn is_discrete(self) -> bool {
        self == AgentKind::CartPole
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AgentKind::CartPole => "cartpole",
            AgentKind::Arm => "arm",
        })
    }
}

impl FromStr for AgentKind {
    type Err = EnvError;
    fn from_str(s: &str) -> Result<Self, EnvError> {
        match s.to_ascii_lowercase().as_str() {
            "cartpole" | "cart-pole" => Ok(AgentKind::CartPole),
            "arm" => Ok(AgentKind::Arm),
            _ => Err(EnvError::UnknownAgent(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Action {
    /// 0 pushes left, 1 pushes right.
    Discrete(usize),
    Continuous(Vec<f64>),
}

impl Action {
    /// Flat numeric form used in trajectory rows.
    pub fn to_vec(&self) -> Vec<f64> {
        match self {
            Action::Discrete(a) => vec![*a as f64],
            Action::Continuous(v) => v.clone(),
        }
    }
}

/// Position in the music track driving the episode. Actions are taken at
/// frames `start..end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MusicCursor {
    pub track: usize,
    pub start: usize,
    pub frame: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub kind: AgentKind,
    pub q: Vec<f64>,
    pub qdot: Vec<f64>,
    pub t: usize,
    pub cursor: MusicCursor,
}

impl EnvState {
    /// `[q; q̇]` as used in policy observations.
    pub fn vector(&self) -> Vec<f64> {
        self.q.iter().chain(&self.qdot).copied().collect()
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(&self.qdot).all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub state: EnvState,
    pub frame: Frame,
    pub penalty: f64,
    pub done: bool,
    pub center_factor: f64,
}

/// Physics outcome of one step without rendering.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: EnvState,
    pub penalty: f64,
    pub done: bool,
    pub center_factor: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub kind: AgentKind,
    pub resolution: usize,
    pub episode_cap: usize,
    /// Music window half-width; bounds the playable frame range.
    pub half_window: usize,
    pub cartpole: CartPoleParams,
    pub arm: ArmParams,
}

impl EnvConfig {
    pub fn new(kind: AgentKind) -> Self {
        Self {
            kind,
            resolution: 48,
            episode_cap: EPISODE_CAP,
            half_window: 30,
            cartpole: CartPoleParams::default(),
            arm: ArmParams::default(),
        }
    }
}

fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::PI;
    let mut r = (a + PI).rem_euclid(2.0 * PI) - PI;
    if r <= -PI {
        r += 2.0 * PI;
    }
    r
}

#[derive(Debug, Clone, PartialEq)]
pub struct Env {
    pub config: EnvConfig,
}

impl Env {
    pub fn new(config: EnvConfig) -> Self {
        Self { config }
    }

    pub fn kind(&self) -> AgentKind {
        self.config.kind
    }

    /// Last frame (exclusive) at which an action may be taken: the flow of
    /// the resulting frame pair must still have a full music window.
    pub fn last_action_frame(&self, music: &MusicFeatureTrack) -> usize {
        music.frames.saturating_sub(self.config.half_window + 1)
    }

    fn check_music(&self, music: &MusicFeatureTrack) -> Result<(), EnvError> {
        let needed = 2 * self.config.half_window + 1;
        if music.frames <= needed {
            return Err(EnvError::MusicTooShort { frames: music.frames, needed });
        }
        Ok(())
    }

    /// Seeded episode start: random music offset and, for the arm, a random
    /// joint configuration with every link above the base.
    pub fn reset(&self, seed: u64, music: &MusicFeatureTrack, track: usize) -> Result<EnvState, EnvError> {
        self.check_music(music)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = self.config.half_window;
        let hi = music.frames.saturating_sub(w + self.config.episode_cap);
        let start = if hi > w { rng.random_range(w..hi) } else { w };
        let mut state = self.initial_state(&mut rng);
        state.cursor = self.cursor(music, track, start);
        Ok(state)
    }

    /// Episode over the whole playable range of the track, used when
    /// generating a dance. The arm starts from a seeded safe pose.
    pub fn reset_full(&self, seed: u64, music: &MusicFeatureTrack, track: usize) -> Result<EnvState, EnvError> {
        self.check_music(music)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut state = self.initial_state(&mut rng);
        let w = self.config.half_window;
        state.cursor = MusicCursor { track, start: w, frame: w, end: self.last_action_frame(music) };
        Ok(state)
    }

    fn cursor(&self, music: &MusicFeatureTrack, track: usize, start: usize) -> MusicCursor {
        let end = (start + self.config.episode_cap).min(self.last_action_frame(music));
        MusicCursor { track, start, frame: start, end }
    }

    fn initial_state<R: Rng>(&self, rng: &mut R) -> EnvState {
        let cursor = MusicCursor { track: 0, start: 0, frame: 0, end: 0 };
        match self.config.kind {
            AgentKind::CartPole => EnvState { kind: AgentKind::CartPole, q: vec![0.0; 2], qdot: vec![0.0; 2], t: 0, cursor },
            AgentKind::Arm => {
                let q = loop {
                    let q = vec![rng.random_range(-1.0..1.0), rng.random_range(-1.2..1.2), rng.random_range(-1.2..1.2)];
                    if self.config.arm.points(&q)[1..].iter().all(|p| p.1 > 0.05) {
                        break q;
                    }
                };
                EnvState { kind: AgentKind::Arm, q, qdot: vec![0.0; ARM_LINKS], t: 0, cursor }
            }
        }
    }

    /// Physics only.
    pub fn advance(&self, state: &EnvState, action: &Action) -> Result<Transition, EnvError> {
        let mut next = state.clone();
        let kind = self.config.kind;
        let (penalty, mut done, center) = match (kind, action) {
            (AgentKind::CartPole, Action::Discrete(a)) if *a < 2 => {
                let p = &self.config.cartpole;
                let f = if *a == 1 { p.force } else { -p.force };
                let [x, th, xd, thd] = p.integrate([state.q[0], state.q[1], state.qdot[0], state.qdot[1]], f, DT);
                next.q = vec![x, wrap_angle(th)];
                next.qdot = vec![xd, thd];
                let x = next.q[0];
                if x.abs() > p.x_view {
                    (-1.0, true, 0.0)
                } else {
                    (0.0, false, (1.0 - x.abs() / p.x_view).max(0.0))
                }
            }
            (AgentKind::Arm, Action::Continuous(cmd)) if cmd.len() == ARM_LINKS => {
                if cmd.iter().any(|c| !c.is_finite()) {
                    return Err(EnvError::InvalidAction { kind, detail: "non-finite command".into() });
                }
                let p = &self.config.arm;
                for i in 0..ARM_LINKS {
                    let target = cmd[i].clamp(-ACTION_LIMIT, ACTION_LIMIT);
                    let dv = (target - state.qdot[i]).clamp(-p.max_velocity_change, p.max_velocity_change);
                    next.qdot[i] = (state.qdot[i] + dv).clamp(-ACTION_LIMIT, ACTION_LIMIT);
                    next.q[i] = wrap_angle(state.q[i] + DT * p.speed_scale * next.qdot[i]);
                }
                (if p.below_base(&next.q) { -1.0 } else { 0.0 }, false, 1.0)
            }
            _ => return Err(EnvError::InvalidAction { kind, detail: format!("{action:?}") }),
        };
        next.t += 1;
        next.cursor.frame += 1;
        if !next.is_finite() {
            return Err(EnvError::NonFinite(next.t));
        }
        if next.t >= self.config.episode_cap || next.cursor.frame >= next.cursor.end {
            done = true;
        }
        Ok(Transition { state: next, penalty, done, center_factor: center })
    }

    pub fn render(&self, state: &EnvState) -> Frame {
        let r = self.config.resolution;
        match state.kind {
            AgentKind::CartPole => self.config.cartpole.render(state.q[0], state.q[1], r, r),
            AgentKind::Arm => self.config.arm.render(&state.q, r, r),
        }
    }

    pub fn step(&self, state: &EnvState, action: &Action) -> Result<StepResult, EnvError> {
        let tr = self.advance(state, action)?;
        let frame = self.render(&tr.state);
        Ok(StepResult { state: tr.state, frame, penalty: tr.penalty, done: tr.done, center_factor: tr.center_factor })
    }
}

/// Per-frame Euclidean norm of the generalized velocities.
pub fn kinematic_velocity<'a, I: IntoIterator<Item = &'a [f64]>>(qdots: I) -> Vec<f64> {
    qdots.into_iter().map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn flat_music(frames: usize) -> MusicFeatureTrack {
        MusicFeatureTrack {
            features: vec![0.0; frames * crate::audio::FEATURE_DIM],
            frames,
            beats: vec![],
            peaks: vec![],
            tempo_bpm: 120.0,
            tempo_valid: false,
        }
    }

    #[test]
    fn reset_is_deterministic_and_cartpole_centered() {
        let music = flat_music(2000);
        let env = Env::new(EnvConfig::new(AgentKind::CartPole));
        let a = env.reset(3, &music, 0).unwrap();
        assert_eq!(a, env.reset(3, &music, 0).unwrap());
        assert_eq!(a.q, vec![0.0, 0.0]);
        assert_eq!(a.qdot, vec![0.0, 0.0]);
        assert!(a.cursor.start >= 30 && a.cursor.start < 2000 - 30 - 1000);
    }

    #[test]
    fn short_music_rejected() {
        let env = Env::new(EnvConfig::new(AgentKind::Arm));
        assert!(matches!(env.reset(0, &flat_music(61), 0), Err(EnvError::MusicTooShort { .. })));
        assert!(env.reset(0, &flat_music(62), 0).is_ok());
    }

    #[test]
    fn arm_resets_never_start_below_base() {
        let env = Env::new(EnvConfig::new(AgentKind::Arm));
        let music = flat_music(200);
        for seed in 0..1000 {
            let s = env.reset(seed, &music, 0).unwrap();
            assert!(!env.config.arm.below_base(&s.q));
        }
    }

    #[test]
    fn cart_leaving_view_ends_episode_with_penalty() {
        let env = Env::new(EnvConfig::new(AgentKind::CartPole));
        let mut s = env.reset(0, &flat_music(3000), 0).unwrap();
        for _ in 0..500 {
            let tr = env.advance(&s, &Action::Discrete(1)).unwrap();
            if tr.state.q[0] > env.config.cartpole.x_view {
                assert!(tr.done);
                assert_eq!(tr.penalty, -1.0);
                return;
            }
            assert_eq!(tr.penalty, 0.0);
            assert!(!tr.done);
            s = tr.state;
        }
        panic!("cart never left the view");
    }

    #[test]
    fn arm_pointing_down_is_penalized_on_crossing() {
        let env = Env::new(EnvConfig::new(AgentKind::Arm));
        let mut s = env.reset(0, &flat_music(3000), 0).unwrap();
        s.q = vec![1.2, 0.0, 0.0];
        s.qdot = vec![0.0; 3];
        let cmd = Action::Continuous(vec![0.9, 0.0, 0.0]);
        loop {
            let tr = env.advance(&s, &cmd).unwrap();
            let crossed = env.config.arm.below_base(&tr.state.q);
            assert_eq!(tr.penalty, if crossed { -1.0 } else { 0.0 });
            assert!(!tr.done);
            if crossed {
                break;
            }
            s = tr.state;
        }
    }

    #[test]
    fn arm_velocity_is_clipped() {
        let env = Env::new(EnvConfig::new(AgentKind::Arm));
        let mut s = env.reset(1, &flat_music(3000), 0).unwrap();
        for k in 0..50 {
            let c = if k % 2 == 0 { 5.0 } else { -7.0 };
            s = env.advance(&s, &Action::Continuous(vec![c, -c, c])).unwrap().state;
            assert!(s.qdot.iter().all(|v| v.abs() <= ACTION_LIMIT));
        }
    }

    #[test]
    fn wrong_action_type_rejected() {
        let env = Env::new(EnvConfig::new(AgentKind::CartPole));
        let s = env.reset(0, &flat_music(200), 0).unwrap();
        assert!(env.advance(&s, &Action::Continuous(vec![0.0; 3])).is_err());
        assert!(env.advance(&s, &Action::Discrete(2)).is_err());
    }

    #[test]
    fn angles_stay_wrapped() {
        for a in [-10.0, -std::f64::consts::PI, 0.0, 3.5, 100.0] {
            let w = wrap_angle(a);
            assert!(w > -std::f64::consts::PI && w <= std::f64::consts::PI);
        }
        assert_eq!(wrap_angle(-std::f64::consts::PI), std::f64::consts::PI);
    }

    #[test]
    fn kinematic_velocity_norms() {
        let rows = [vec![0.3, 0.4], vec![0.3, 0.4]];
        assert_eq!(kinematic_velocity(rows.iter().map(|r| r.as_slice())), vec![0.5, 0.5]);
        let zero = [vec![0.0; 3]];
        assert_eq!(kinematic_velocity(zero.iter().map(|r| r.as_slice())), vec![0.0]);
    }
}
