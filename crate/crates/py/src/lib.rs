//! Python bindings: music features, optical flow, metrics, the reward model,
//! the simulated agents and trained policies.
//!
//! Images cross the boundary as flat row-major lists with explicit width and
//! height; feature matrices as lists of rows.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rhythmotion::audio::{decode_wav, extract_music_features, read_mft, write_mft, MusicFeatureTrack, PcmSignal, FEATURE_DIM};
use rhythmotion::env::{Action, AgentKind, Env as CoreEnv, EnvConfig, EnvState};
use rhythmotion::flow::{estimate_flow as core_flow, FlowField};
use rhythmotion::frame::Frame;
use rhythmotion::metrics::{self, CorrelationReport, KinematicBeatConfig, Note};
use rhythmotion::reward::{self, RewardModel as CoreRewardModel};
use rhythmotion::rl::{observation_frame, play_track, DanceTask, ObservationKind, Policy as CorePolicy, RewardModelTask, RlError};
use rhythmotion::{derive_seed, Error};

fn py_err(e: impl Into<Error>) -> PyErr {
    let e = e.into();
    if e.is_input_error() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

pub fn frame_from(data: Vec<f32>, width: usize, height: usize) -> Result<Frame, String> {
    if data.len() != width * height {
        return Err(format!("image has {} values, expected {width}x{height}", data.len()));
    }
    Ok(Frame { width, height, data })
}

pub fn parse_note(note: u32) -> Result<Note, String> {
    Note::ALL.into_iter().find(|n| n.denominator() == note).ok_or_else(|| format!("note must be 16, 32 or 64, got {note}"))
}

pub fn action_from(kind: AgentKind, action: &[f64]) -> Result<Action, String> {
    if kind.is_discrete() {
        match action {
            [a] if *a == 0.0 || *a == 1.0 => Ok(Action::Discrete(*a as usize)),
            _ => Err("cart-pole action is a single 0 (left) or 1 (right)".into()),
        }
    } else if action.len() == kind.action_dim() {
        Ok(Action::Continuous(action.to_vec()))
    } else {
        Err(format!("arm action needs {} joint velocities, got {}", kind.action_dim(), action.len()))
    }
}

fn value_err(e: String) -> PyErr {
    PyValueError::new_err(e)
}

/// Per-frame music features (60 FPS, 35 columns) with beats and peaks.
#[pyclass(name = "MusicTrack", module = "rhythmotion", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct MusicTrack {
    inner: MusicFeatureTrack,
}

#[pymethods]
impl MusicTrack {
    #[staticmethod]
    fn from_wav(path: PathBuf) -> PyResult<Self> {
        let signal = decode_wav(&path).map_err(py_err)?;
        Ok(Self { inner: extract_music_features(&signal).map_err(py_err)? })
    }

    /// Mono samples in `[-1, 1]`.
    #[staticmethod]
    fn from_samples(samples: Vec<f64>, sample_rate: u32) -> PyResult<Self> {
        let signal = PcmSignal::new(samples, sample_rate).map_err(py_err)?;
        Ok(Self { inner: extract_music_features(&signal).map_err(py_err)? })
    }

    /// Reads a `.mft` feature file.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: read_mft(&path).map_err(py_err)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        write_mft(&path, &self.inner).map_err(py_err)
    }

    #[getter]
    fn frames(&self) -> usize {
        self.inner.frames
    }

    #[getter]
    fn tempo_bpm(&self) -> f64 {
        self.inner.tempo_bpm
    }

    #[getter]
    fn tempo_valid(&self) -> bool {
        self.inner.tempo_valid
    }

    #[getter]
    fn beats(&self) -> Vec<usize> {
        self.inner.beats.clone()
    }

    #[getter]
    fn peaks(&self) -> Vec<usize> {
        self.inner.peaks.clone()
    }

    fn row(&self, t: usize) -> PyResult<Vec<f32>> {
        if t >= self.inner.frames {
            return Err(value_err(format!("frame {t} out of range for {} frames", self.inner.frames)));
        }
        Ok(self.inner.row(t).to_vec())
    }

    fn features(&self) -> Vec<Vec<f32>> {
        self.inner.features.chunks(FEATURE_DIM).map(<[f32]>::to_vec).collect()
    }

    fn envelope(&self) -> Vec<f64> {
        self.inner.envelope()
    }

    fn __len__(&self) -> usize {
        self.inner.frames
    }

    fn __repr__(&self) -> String {
        format!("MusicTrack(frames={}, tempo_bpm={:.1}, beats={})", self.inner.frames, self.inner.tempo_bpm, self.inner.beats.len())
    }
}

/// Dense Horn–Schunck flow from `prev` to `next`; returns `(u, v)`.
#[pyfunction]
fn estimate_flow(prev: Vec<f32>, next: Vec<f32>, width: usize, height: usize) -> PyResult<(Vec<f32>, Vec<f32>)> {
    let a = frame_from(prev, width, height).map_err(value_err)?;
    let b = frame_from(next, width, height).map_err(value_err)?;
    let f = core_flow(&a, &b).map_err(py_err)?;
    Ok((f.u, f.v))
}

#[pyfunction]
#[pyo3(signature = (kinematic, reference, sigma = 3.0))]
fn beat_align(kinematic: Vec<usize>, reference: Vec<usize>, sigma: f64) -> PyResult<f64> {
    metrics::beat_align(&kinematic, &reference, sigma).map_err(py_err)
}

/// Precision, recall and F1 at a 1/16, 1/32 or 1/64 note tolerance.
#[pyfunction]
fn f1_at_note(kinematic: Vec<usize>, reference: Vec<usize>, tempo_bpm: f64, note: u32) -> PyResult<(f64, f64, f64)> {
    let p = metrics::f1_at_note(&kinematic, &reference, tempo_bpm, parse_note(note).map_err(value_err)?);
    Ok((p.precision, p.recall, p.f1))
}

#[pyfunction]
fn kinematic_beats(velocity: Vec<f64>) -> Vec<usize> {
    metrics::kinematic_beats(&velocity, &KinematicBeatConfig::default())
}

fn report_dict<'py>(py: Python<'py>, r: &CorrelationReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("beat_align", r.beat_align)?;
    d.set_item("peak_align", r.peak_align)?;
    for (name, s) in [("beats", &r.beats), ("peaks", &r.peaks)] {
        for (note, p) in [(16, &s.sixteenth), (32, &s.thirty_second), (64, &s.sixty_fourth)] {
            d.set_item(format!("{name}_f1_{note}"), p.f1)?;
        }
    }
    d.set_item("tempo_bpm", r.tempo_bpm)?;
    d.set_item("kinematic_beats", r.kinematic_beats.clone())?;
    d.set_item("music_beats", r.music_beats.clone())?;
    d.set_item("music_peaks", r.music_peaks.clone())?;
    Ok(d)
}

/// Scores a kinematic velocity series whose first element belongs to music
/// frame `first_frame`.
#[pyfunction]
#[pyo3(signature = (velocity, music, first_frame = 0, sigma = 3.0))]
fn evaluate<'py>(py: Python<'py>, velocity: Vec<f64>, music: &MusicTrack, first_frame: usize, sigma: f64) -> PyResult<Bound<'py, PyDict>> {
    let r = metrics::evaluate_velocity(&velocity, first_frame, &music.inner, &KinematicBeatConfig::default(), sigma).map_err(py_err)?;
    report_dict(py, &r)
}

#[pyfunction]
fn cosine(a: Vec<f64>, b: Vec<f64>) -> f64 {
    reward::cosine(&a, &b)
}

/// InfoNCE loss over row-aligned flow and music embeddings.
#[pyfunction]
#[pyo3(signature = (z_o, z_m, tau = 0.1))]
fn info_nce(z_o: Vec<Vec<f64>>, z_m: Vec<Vec<f64>>, tau: f64) -> PyResult<f64> {
    reward::info_nce(&z_o, &z_m, tau).map_err(py_err)
}

/// Frozen contrastive reward model loaded from a checkpoint.
#[pyclass(name = "RewardModel", module = "rhythmotion", frozen)]
pub struct RewardModel {
    inner: CoreRewardModel,
}

#[pymethods]
impl RewardModel {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: CoreRewardModel::load(&path).map_err(py_err)? })
    }

    #[getter]
    fn content_hash(&self) -> String {
        self.inner.content_hash()
    }

    #[getter]
    fn half_window(&self) -> usize {
        self.inner.config.half_window
    }

    /// `(h, z)` for the music window centred on `frame`.
    fn music_embedding(&self, music: &MusicTrack, frame: usize) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let mut e = self.inner.music_embeddings(&music.inner, &[frame]).map_err(py_err)?;
        Ok(e.remove(0))
    }

    fn flow_embedding(&self, u: Vec<f32>, v: Vec<f32>, width: usize, height: usize) -> PyResult<Vec<f64>> {
        let flow = flow_field(u, v, width, height)?;
        self.inner.flow_embedding(&flow).map_err(py_err)
    }

    /// Cosine similarity between a music embedding and the embedding of a flow.
    fn reward(&self, z_m: Vec<f64>, u: Vec<f32>, v: Vec<f32>, width: usize, height: usize) -> PyResult<f64> {
        let flow = flow_field(u, v, width, height)?;
        self.inner.reward_for_flow(&z_m, &flow).map_err(py_err)
    }
}

fn flow_field(u: Vec<f32>, v: Vec<f32>, width: usize, height: usize) -> PyResult<FlowField> {
    if u.len() != width * height || v.len() != width * height {
        return Err(value_err(format!("flow channels must hold {width}x{height} values")));
    }
    Ok(FlowField { width, height, u, v })
}

fn agent_kind(agent: &str) -> PyResult<AgentKind> {
    agent.parse().map_err(py_err)
}

/// A simulated agent stepping through a music track at 60 Hz.
#[pyclass(name = "Env", module = "rhythmotion")]
pub struct Env {
    env: CoreEnv,
    music: Option<MusicFeatureTrack>,
    state: Option<EnvState>,
}

#[pymethods]
impl Env {
    #[new]
    #[pyo3(signature = (agent, resolution = None))]
    fn new(agent: &str, resolution: Option<usize>) -> PyResult<Self> {
        let mut config = EnvConfig::new(agent_kind(agent)?);
        if let Some(r) = resolution {
            config.resolution = r;
        }
        Ok(Self { env: CoreEnv::new(config), music: None, state: None })
    }

    #[getter]
    fn agent(&self) -> String {
        self.env.kind().to_string()
    }

    #[getter]
    fn resolution(&self) -> usize {
        self.env.config.resolution
    }

    /// Starts an episode at a seeded offset into `music`; returns the state vector.
    #[pyo3(signature = (music, seed = 0))]
    fn reset(&mut self, music: &MusicTrack, seed: u64) -> PyResult<Vec<f64>> {
        let state = self.env.reset(seed, &music.inner, 0).map_err(py_err)?;
        let v = state.vector();
        self.music = Some(music.inner.clone());
        self.state = Some(state);
        Ok(v)
    }

    /// Applies an action; returns a dict with `state`, `frame`, `penalty`,
    /// `done` and `center_factor`.
    fn step<'py>(&mut self, py: Python<'py>, action: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
        let state = self.state.as_ref().ok_or_else(|| PyRuntimeError::new_err("call reset() first"))?;
        let action = action_from(self.env.kind(), &action).map_err(value_err)?;
        let res = self.env.step(state, &action).map_err(py_err)?;
        let d = PyDict::new(py);
        d.set_item("state", res.state.vector())?;
        d.set_item("frame", res.frame.data)?;
        d.set_item("penalty", res.penalty)?;
        d.set_item("done", res.done)?;
        d.set_item("center_factor", res.center_factor)?;
        self.state = Some(res.state);
        Ok(d)
    }

    /// Current rendered frame as a flat row-major list.
    fn render(&self) -> PyResult<Vec<f32>> {
        let state = self.state.as_ref().ok_or_else(|| PyRuntimeError::new_err("call reset() first"))?;
        Ok(self.env.render(state).data)
    }

    /// Music frame the next action is taken at.
    #[getter]
    fn music_frame(&self) -> Option<usize> {
        self.state.as_ref().map(|s| s.cursor.frame)
    }
}

/// A trained PPO dancer.
#[pyclass(name = "Policy", module = "rhythmotion", frozen)]
pub struct Policy {
    inner: CorePolicy,
}

#[pymethods]
impl Policy {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: CorePolicy::load(&path).map_err(py_err)? })
    }

    #[getter]
    fn agent(&self) -> String {
        self.inner.meta.agent.to_string()
    }

    #[getter]
    fn obs_dim(&self) -> usize {
        self.inner.meta.obs_dim
    }

    /// Action-head output (logits or Gaussian means) and value for one observation.
    fn forward(&self, obs: Vec<f64>) -> PyResult<(Vec<f64>, f64)> {
        let (out, _) = self.inner.forward(&obs, 1).map_err(py_err)?;
        Ok((out.row(0).to_vec(), out.values[0]))
    }

    /// Dances over the whole track. Policies trained against a reward model
    /// need it for their observations; it also scores each step.
    #[pyo3(signature = (music, reward_model = None, deterministic = true, seed = 0))]
    fn dance<'py>(
        &self,
        py: Python<'py>,
        music: &MusicTrack,
        reward_model: Option<&RewardModel>,
        deterministic: bool,
        seed: u64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let policy = &self.inner;
        let env = CoreEnv::new(EnvConfig::new(policy.meta.agent));
        let tracks = [music.inner.clone()];
        let task = reward_model.map(|m| RewardModelTask::new(&m.inner, &tracks, 1)).transpose().map_err(py_err)?;
        let observation = policy.meta.observation;
        if observation == ObservationKind::MusicEmbedding && task.is_none() {
            return Err(value_err("this policy observes reward-model embeddings; pass reward_model".into()));
        }
        let track = &tracks[0];
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0xda9));
        let controller = |state: &EnvState| -> Result<Action, RlError> {
            let frame = observation_frame(state);
            let obs = match (&task, observation) {
                (Some(t), ObservationKind::MusicEmbedding) => t.observe(0, frame, state)?,
                _ => {
                    if frame >= track.frames {
                        return Err(RlError::WindowRange { frame, frames: track.frames });
                    }
                    let mut o: Vec<f64> = track.row(frame).iter().map(|&v| v as f64).collect();
                    o.extend(state.vector());
                    o
                }
            };
            let (out, _) = policy.forward(&obs, 1)?;
            Ok(if deterministic { policy.mode(out.row(0)).0 } else { policy.sample(out.row(0), &out.log_std, &mut rng).0 })
        };
        let scorer = task.as_ref().map(|t| t as &dyn DanceTask);
        let dance = play_track(&env, track, "python", 0, seed, controller, scorer, false).map_err(py_err)?;
        let traj = &dance.trajectory;
        let d = PyDict::new(py);
        d.set_item("start_frame", traj.header.start_frame)?;
        d.set_item("actions", traj.rows.iter().map(|r| r.action.clone()).collect::<Vec<_>>())?;
        d.set_item("states", traj.rows.iter().map(|r| [r.q.clone(), r.qdot.clone()].concat()).collect::<Vec<_>>())?;
        d.set_item("velocity", traj.velocities())?;
        d.set_item("scores", dance.raw_scores.clone())?;
        d.set_item("mean_score", dance.mean_raw_score())?;
        Ok(d)
    }
}

#[pymodule(name = "rhythmotion")]
fn rhythmotion_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("FPS", rhythmotion::FPS)?;
    m.add("FEATURE_DIM", FEATURE_DIM)?;
    m.add_class::<MusicTrack>()?;
    m.add_class::<RewardModel>()?;
    m.add_class::<Env>()?;
    m.add_class::<Policy>()?;
    m.add_function(wrap_pyfunction!(estimate_flow, m)?)?;
    m.add_function(wrap_pyfunction!(beat_align, m)?)?;
    m.add_function(wrap_pyfunction!(f1_at_note, m)?)?;
    m.add_function(wrap_pyfunction!(kinematic_beats, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(cosine, m)?)?;
    m.add_function(wrap_pyfunction!(info_nce, m)?)?;
    Ok(())
}
