use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AgentKind, EnvError};

use crate::container;

pub const TRJ_MAGIC: &[u8; 4] = b"TRJ1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajHeader {
    /// Agent name: `cartpole`, `arm`, or `reference` for synthesized dancers.
    pub agent: String,
    pub seed: u64,
    /// Free-form reference to the driving music (usually a file name).
    pub music: String,
    pub dt: f64,
    /// Music frame of the first row.
    pub start_frame: usize,
    pub rows: usize,
    pub q_dim: usize,
    pub action_dim: usize,
}

/// State after each action, with the action that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajRow {
    pub q: Vec<f64>,
    pub qdot: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub penalty: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub header: TrajHeader,
    pub rows: Vec<TrajRow>,
}

impl Trajectory {
    pub fn new(agent: AgentKind, seed: u64, music: &str, start_frame: usize) -> Self {
        let q_dim = agent.state_dim() / 2;
        let action_dim = if agent.is_discrete() { 1 } else { agent.action_dim() };
        Self::with_dims(&agent.to_string(), q_dim, action_dim, seed, music, start_frame)
    }

    pub fn with_dims(agent: &str, q_dim: usize, action_dim: usize, seed: u64, music: &str, start_frame: usize) -> Self {
        Self {
            header: TrajHeader { agent: agent.into(), seed, music: music.into(), dt: super::DT, start_frame, rows: 0, q_dim, action_dim },
            rows: Vec::new(),
        }
    }

    /// Agent kind when the trajectory belongs to a simulated agent.
    pub fn agent_kind(&self) -> Option<AgentKind> {
        self.header.agent.parse().ok()
    }

    pub fn push(&mut self, row: TrajRow) {
        self.rows.push(row);
        self.header.rows = self.rows.len();
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn velocities(&self) -> Vec<f64> {
        super::kinematic_velocity(self.rows.iter().map(|r| r.qdot.as_slice()))
    }

    pub fn encode(&self) -> Result<Vec<u8>, EnvError> {
        let h = &self.header;
        let mut payload = Vec::with_capacity(self.rows.len() * (2 * h.q_dim + h.action_dim + 2));
        for r in &self.rows {
            if r.q.len() != h.q_dim || r.qdot.len() != h.q_dim || r.action.len() != h.action_dim {
                return Err(EnvError::Trajectory("row width disagrees with header".into()));
            }
            payload.extend(r.q.iter().chain(&r.qdot).chain(&r.action).map(|&v| v as f32));
            payload.push(r.reward as f32);
            payload.push(r.penalty as f32);
        }
        Ok(container::encode(TRJ_MAGIC, h, &payload)?)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, EnvError> {
        let (header, payload): (TrajHeader, Vec<f32>) = container::decode(TRJ_MAGIC, bytes)?;
        let width = 2 * header.q_dim + header.action_dim + 2;
        container::expect_len("trajectory", payload.len(), width * header.rows)?;
        let rows = payload
            .chunks_exact(width.max(1))
            .take(header.rows)
            .map(|c| {
                let f = |s: &[f32]| s.iter().map(|&v| v as f64).collect::<Vec<_>>();
                let (q, rest) = c.split_at(header.q_dim);
                let (qdot, rest) = rest.split_at(header.q_dim);
                let (action, rest) = rest.split_at(header.action_dim);
                TrajRow { q: f(q), qdot: f(qdot), action: f(action), reward: rest[0] as f64, penalty: rest[1] as f64 }
            })
            .collect();
        Ok(Self { header, rows })
    }
}

pub fn write_traj(path: &Path, traj: &Trajectory) -> Result<(), EnvError> {
    let bytes = traj.encode()?;
    std::fs::write(path, bytes).map_err(|source| container::ContainerError::Io { path: path.display().to_string(), source })?;
    Ok(())
}

pub fn read_traj(path: &Path) -> Result<Trajectory, EnvError> {
    let bytes = std::fs::read(path).map_err(|source| container::ContainerError::Io { path: path.display().to_string(), source })?;
    Trajectory::decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_at_f32_precision() {
        let mut t = Trajectory::new(AgentKind::Arm, 4, "song.wav", 30);
        t.push(TrajRow { q: vec![0.5, -0.25, 1.0], qdot: vec![0.1, 0.2, 0.3], action: vec![0.9, -0.9, 0.0], reward: 0.75, penalty: -1.0 });
        let back = Trajectory::decode(&t.encode().unwrap()).unwrap();
        assert_eq!(back.header, t.header);
        assert_eq!(back.rows[0].q, t.rows[0].q);
        assert!((back.rows[0].qdot[0] - 0.1).abs() < 1e-7);
        assert_eq!(back.rows[0].penalty, -1.0);
    }
}
