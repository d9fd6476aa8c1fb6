use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::figure::{render_reference, synth_choreography, ChoreoConfig, ReferenceChoreography, FIGURE_JOINTS};
use super::DatasetError;
use crate::audio::{self, synth, MusicFeatureTrack, PcmSignal};
use crate::env::{read_traj, write_traj, TrajRow, Trajectory};
use crate::flow::{estimate_flow_with, read_flows, write_flows, FlowField, HornSchunck};
use crate::{derive_seed, par, FPS};

pub const MANIFEST_NAME: &str = "manifest.json";
const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub half_window: usize,
    pub stride: usize,
    pub resolution: usize,
    pub val_fraction: f64,
    pub seed: u64,
    pub choreo: ChoreoConfig,
    pub flow_alpha: f32,
    pub flow_iterations: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            half_window: 30,
            stride: 3,
            resolution: 48,
            val_fraction: 0.25,
            seed: 0,
            choreo: ChoreoConfig::default(),
            flow_alpha: 10.0,
            flow_iterations: 100,
        }
    }
}

impl DatasetConfig {
    pub fn flow(&self) -> HornSchunck {
        HornSchunck { alpha: self.flow_alpha, iterations: self.flow_iterations, ..HornSchunck::default() }
    }
}

/// `floor((T − 2·w_a − 1) / stride)`.
pub fn sample_count(frames: usize, half_window: usize, stride: usize) -> usize {
    frames.saturating_sub(2 * half_window + 1) / stride.max(1)
}

/// Sample `k` sits at frame `w_a + 1 + k·stride`; its flow runs from the
/// previous frame to that frame and its music window is centred on it.
pub fn sample_frames(frames: usize, half_window: usize, stride: usize) -> Vec<usize> {
    (0..sample_count(frames, half_window, stride)).map(|k| half_window + 1 + k * stride.max(1)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackData {
    pub name: String,
    pub music: MusicFeatureTrack,
    pub choreo: ReferenceChoreography,
    pub sample_frames: Vec<usize>,
    pub flows: Vec<FlowField>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub config: DatasetConfig,
    pub tracks: Vec<TrackData>,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct TrackEntry {
    name: String,
    frames: usize,
    tempo_bpm: f64,
    samples: usize,
    choreo_seed: u64,
    keyframes: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    schema_version: u32,
    config: DatasetConfig,
    tracks: Vec<TrackEntry>,
    train: Vec<String>,
    val: Vec<String>,
}

fn build_track(name: String, signal: &PcmSignal, cfg: &DatasetConfig, index: usize) -> Result<TrackData, DatasetError> {
    let music = audio::extract_music_features(signal)?;
    let choreo_seed = derive_seed(cfg.seed, index as u64);
    let choreo = synth_choreography(&music, choreo_seed, &cfg.choreo);
    let frames = render_reference(&choreo, cfg.resolution);
    let sample_frames = sample_frames(music.frames, cfg.half_window, cfg.stride);
    let hs = cfg.flow();
    let flows = sample_frames.iter().map(|&t| estimate_flow_with(&frames[t - 1], &frames[t], &hs)).collect::<Result<_, _>>()?;
    Ok(TrackData { name, music, choreo, sample_frames, flows })
}

fn split(n: usize, cfg: &DatasetConfig) -> (Vec<usize>, Vec<usize>) {
    let n_val = ((n as f64 * cfg.val_fraction).round() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 0x5911)));
    let mut val = order[..n_val].to_vec();
    let mut train = order[n_val..].to_vec();
    val.sort_unstable();
    train.sort_unstable();
    (train, val)
}

/// Builds the dataset from decoded signals. Tracks that fail analysis are
/// reported and skipped; at least two must survive.
pub fn build_dataset_from_signals(
    signals: Vec<(String, PcmSignal)>,
    cfg: &DatasetConfig,
    workers: usize,
) -> Result<(Dataset, Vec<String>), DatasetError> {
    let results = par::parallel_map(signals, workers, |i, (name, sig)| build_track(name.clone(), &sig, cfg, i).map_err(|e| format!("{name}: {e}")));
    let mut tracks = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(t) if !t.sample_frames.is_empty() => tracks.push(t),
            Ok(t) => failures.push(format!("{}: too short for a {}-frame window", t.name, 2 * cfg.half_window + 1)),
            Err(e) => failures.push(e),
        }
    }
    if tracks.len() < 2 {
        return Err(DatasetError::NotEnoughTracks { usable: tracks.len(), failures });
    }
    let (train, val) = split(tracks.len(), cfg);
    Ok((Dataset { config: *cfg, tracks, train, val }, failures))
}

/// Decodes WAV files and builds the dataset; decode failures are reported
/// per file.
pub fn build_dataset(paths: &[PathBuf], cfg: &DatasetConfig, workers: usize) -> Result<(Dataset, Vec<String>), DatasetError> {
    let mut signals = Vec::new();
    let mut failures = Vec::new();
    for p in paths {
        let name = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "track".into());
        match audio::decode_wav(p) {
            Ok(s) => signals.push((name, s)),
            Err(e) => failures.push(format!("{}: {e}", p.display())),
        }
    }
    if signals.len() < 2 {
        return Err(DatasetError::NotEnoughTracks { usable: signals.len(), failures });
    }
    let (ds, mut more) = build_dataset_from_signals(signals, cfg, workers)?;
    failures.append(&mut more);
    Ok((ds, failures))
}

/// `n` seeded tone tracks named `tone_000`, `tone_001`, ...
pub fn generate_tone_corpus(n: usize, secs: f64, sample_rate: u32, seed: u64) -> Vec<(String, PcmSignal)> {
    (0..n).map(|i| (format!("tone_{i:03}"), synth::tone_track(derive_seed(seed, 1000 + i as u64), secs, sample_rate).0)).collect()
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io { path: path.display().to_string(), source }
}

impl Dataset {
    pub fn num_samples(&self, split: &[usize]) -> usize {
        split.iter().map(|&i| self.tracks[i].sample_frames.len()).sum()
    }

    /// Writes per-track `.mft`, `.traj` and `.rfl` files plus the manifest.
    pub fn save(&self, dir: &Path) -> Result<(), DatasetError> {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        let mut entries = Vec::new();
        for t in &self.tracks {
            audio::write_mft(&dir.join(format!("{}.mft", t.name)), &t.music)?;
            let mut traj = Trajectory::with_dims("reference", FIGURE_JOINTS, 0, t.choreo.seed, &format!("{}.mft", t.name), 0);
            for (k, p) in t.choreo.poses.iter().enumerate() {
                let prev = if k == 0 { *p } else { t.choreo.poses[k - 1] };
                let qdot = (0..FIGURE_JOINTS).map(|j| (p[j] - prev[j]) * FPS as f64).collect();
                traj.push(TrajRow { q: p.to_vec(), qdot, action: vec![], reward: 0.0, penalty: 0.0 });
            }
            write_traj(&dir.join(format!("{}.traj", t.name)), &traj)?;
            write_flows(&dir.join(format!("{}.rfl", t.name)), &t.flows)?;
            entries.push(TrackEntry {
                name: t.name.clone(),
                frames: t.music.frames,
                tempo_bpm: t.music.tempo_bpm,
                samples: t.sample_frames.len(),
                choreo_seed: t.choreo.seed,
                keyframes: t.choreo.keyframes.clone(),
            });
        }
        let names = |idx: &[usize]| idx.iter().map(|&i| self.tracks[i].name.clone()).collect();
        let manifest = Manifest { schema_version: MANIFEST_VERSION, config: self.config, tracks: entries, train: names(&self.train), val: names(&self.val) };
        let json = serde_json::to_string_pretty(&manifest).map_err(|e| DatasetError::Manifest(e.to_string()))?;
        let path = dir.join(MANIFEST_NAME);
        std::fs::write(&path, json + "\n").map_err(io_err(&path))
    }

    pub fn load(dir: &Path) -> Result<Self, DatasetError> {
        let path = dir.join(MANIFEST_NAME);
        let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
        let m: Manifest = serde_json::from_str(&text).map_err(|e| DatasetError::Manifest(e.to_string()))?;
        if m.schema_version != MANIFEST_VERSION {
            return Err(DatasetError::Manifest(format!("schema version {} unsupported", m.schema_version)));
        }
        let mut tracks = Vec::new();
        for e in &m.tracks {
            let music = audio::read_mft(&dir.join(format!("{}.mft", e.name)))?;
            let traj = read_traj(&dir.join(format!("{}.traj", e.name)))?;
            let flows = read_flows(&dir.join(format!("{}.rfl", e.name)))?;
            let sample_frames = sample_frames(music.frames, m.config.half_window, m.config.stride);
            if flows.len() != sample_frames.len() || music.frames != e.frames || traj.len() != music.frames {
                return Err(DatasetError::Manifest(format!("track {} files disagree with the manifest", e.name)));
            }
            let poses: Vec<[f64; FIGURE_JOINTS]> = traj
                .rows
                .iter()
                .map(|r| {
                    let mut p = [0.0; FIGURE_JOINTS];
                    p.copy_from_slice(&r.q);
                    p
                })
                .collect();
            let speed = traj.velocities();
            let choreo = ReferenceChoreography { poses, speed, keyframes: e.keyframes.clone(), seed: e.choreo_seed };
            tracks.push(TrackData { name: e.name.clone(), music, choreo, sample_frames, flows });
        }
        let find = |names: &[String]| -> Result<Vec<usize>, DatasetError> {
            names
                .iter()
                .map(|n| tracks.iter().position(|t| &t.name == n).ok_or_else(|| DatasetError::Manifest(format!("unknown track {n}"))))
                .collect()
        };
        let train = find(&m.train)?;
        let val = find(&m.val)?;
        Ok(Self { config: m.config, tracks, train, val })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counting_formula() {
        assert_eq!(sample_count(61, 30, 1), 0);
        assert_eq!(sample_count(62, 30, 1), 1);
        assert_eq!(sample_frames(62, 30, 1), vec![31]);
        assert_eq!(sample_count(200, 30, 3), 46);
        let f = sample_frames(200, 30, 3);
        assert!(*f.last().unwrap() + 30 < 200);
    }

    #[test]
    fn split_is_disjoint_and_sized() {
        let cfg = DatasetConfig::default();
        let (train, val) = split(8, &cfg);
        assert_eq!((train.len(), val.len()), (6, 2));
        assert!(train.iter().all(|t| !val.contains(t)));
    }
}
