use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::audio::MusicFeatureTrack;
use crate::env::render::{Canvas, View};
use crate::frame::Frame;
use crate::FPS;

/// Torso tilt, then shoulder and elbow of the left and right arm.
pub const FIGURE_JOINTS: usize = 5;

const BASE_POSE: [f64; FIGURE_JOINTS] = [0.0, -2.4, 0.3, 2.4, -0.3];
const HIP: (f64, f64) = (0.0, 0.1);
const TORSO: f64 = 0.42;
const UPPER_ARM: f64 = 0.3;
const FOREARM: f64 = 0.26;
const DIRECTION_TABLE_SEED: u64 = 0x00c4_03e0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChoreoConfig {
    /// Joint amplitude (rad) per unit of mean onset envelope.
    pub gain: f64,
    pub max_amplitude: f64,
    /// Relative per-beat noise added to each target pose.
    pub jitter: f64,
    /// Moving-average width applied to the envelope before measuring loudness.
    pub smooth: usize,
}

impl Default for ChoreoConfig {
    fn default() -> Self {
        Self { gain: 5.0, max_amplitude: 1.2, jitter: 0.15, smooth: 9 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceChoreography {
    /// Per-frame joint angles.
    pub poses: Vec<[f64; FIGURE_JOINTS]>,
    /// Per-frame joint-space speed (rad/s); zero at frame 0.
    pub speed: Vec<f64>,
    /// Frames where one motion segment ends and the next begins; the motion
    /// comes to rest at each of them.
    pub keyframes: Vec<usize>,
    pub seed: u64,
}

/// One fixed displacement direction per pitch class, shared by every track
/// so that the pitch-to-motion mapping is learnable across tracks.
fn direction_table() -> [[f64; FIGURE_JOINTS]; 12] {
    let mut rng = ChaCha8Rng::seed_from_u64(DIRECTION_TABLE_SEED);
    let mut table = [[0.0; FIGURE_JOINTS]; 12];
    for row in table.iter_mut() {
        for (j, v) in row.iter_mut().enumerate() {
            let scale = if j == 0 { 0.3 } else { 1.0 };
            *v = scale * rng.random_range(-1.0..1.0);
        }
    }
    table
}

fn ease(phi: f64) -> f64 {
    0.5 * (1.0 - (std::f64::consts::PI * phi).cos())
}

/// Pitch class dominating frames `a..b`, if any chroma energy is present.
fn segment_pitch(music: &MusicFeatureTrack, a: usize, b: usize) -> Option<usize> {
    let mut acc = [0.0f64; 12];
    for t in a..b.min(music.frames) {
        for (k, v) in music.row(t)[21..33].iter().enumerate() {
            acc[k] += *v as f64;
        }
    }
    let (best, val) = acc.iter().enumerate().fold((0, 0.0), |m, (k, &v)| if v > m.1 { (k, v) } else { m });
    (val > 0.0).then_some(best)
}

/// Motion that moves between rest poses at music beats: during each beat
/// interval the figure travels towards a target set by the interval's
/// dominant pitch class, scaled by its loudness, with eased timing so the
/// velocity vanishes on every beat.
pub fn synth_choreography(music: &MusicFeatureTrack, seed: u64, cfg: &ChoreoConfig) -> ReferenceChoreography {
    let t_len = music.frames;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let env = crate::metrics::moving_average(&music.envelope(), cfg.smooth);
    let table = direction_table();

    let mut keyframes = vec![0];
    keyframes.extend(music.beats.iter().copied().filter(|&b| b > 0 && b + 1 < t_len));
    if t_len > 1 {
        keyframes.push(t_len - 1);
    }
    let mut targets = vec![BASE_POSE];
    for w in keyframes.windows(2) {
        let (a, b) = (w[0], w[1]);
        let loud = env[a..b].iter().sum::<f64>() / (b - a) as f64;
        let amp = (cfg.gain * loud).min(cfg.max_amplitude);
        // Skip the attack frames, where the beat click dominates chroma.
        let lo = (a + 3).min(b.saturating_sub(1));
        let dir = segment_pitch(music, lo, (a + 12).min(b)).map(|pc| table[pc]).unwrap_or([0.0; FIGURE_JOINTS]);
        let mut p = BASE_POSE;
        for j in 0..FIGURE_JOINTS {
            let noise: f64 = StandardNormal.sample(&mut rng);
            p[j] += amp * (dir[j] + cfg.jitter * noise);
        }
        targets.push(p);
    }

    let mut poses = vec![BASE_POSE; t_len];
    for (k, w) in keyframes.windows(2).enumerate() {
        let (a, b) = (w[0], w[1]);
        for t in a..=b {
            let s = ease((t - a) as f64 / (b - a) as f64);
            for j in 0..FIGURE_JOINTS {
                poses[t][j] = targets[k][j] + (targets[k + 1][j] - targets[k][j]) * s;
            }
        }
    }
    let mut speed = vec![0.0; t_len];
    for t in 1..t_len {
        let d: f64 = (0..FIGURE_JOINTS).map(|j| (poses[t][j] - poses[t - 1][j]).powi(2)).sum();
        speed[t] = d.sqrt() * FPS as f64;
    }
    let interior = keyframes[1..keyframes.len().saturating_sub(1)].to_vec();
    ReferenceChoreography { poses, speed, keyframes: interior, seed }
}

/// Hip, neck, head, then elbow and hand of each arm.
pub fn figure_points(pose: &[f64; FIGURE_JOINTS]) -> [(f64, f64); 7] {
    let dir = |a: f64| (a.sin(), a.cos());
    let add = |p: (f64, f64), d: (f64, f64), l: f64| (p.0 + l * d.0, p.1 + l * d.1);
    let neck = add(HIP, dir(pose[0]), TORSO);
    let head = add(neck, dir(pose[0]), 0.12);
    let l_elbow = add(neck, dir(pose[0] + pose[1]), UPPER_ARM);
    let l_hand = add(l_elbow, dir(pose[0] + pose[1] + pose[2]), FOREARM);
    let r_elbow = add(neck, dir(pose[0] + pose[3]), UPPER_ARM);
    let r_hand = add(r_elbow, dir(pose[0] + pose[3] + pose[4]), FOREARM);
    [HIP, neck, head, l_elbow, l_hand, r_elbow, r_hand]
}

fn view() -> View {
    View { center: (0.0, 0.25), span: 1.9 }
}

pub fn render_reference_frame(pose: &[f64; FIGURE_JOINTS], resolution: usize) -> Frame {
    let mut c = Canvas::new(resolution, resolution, view(), 0.0);
    let p = figure_points(pose);
    c.capsule(HIP, (-0.13, -0.55), 0.05, 0.5);
    c.capsule(HIP, (0.13, -0.55), 0.05, 0.5);
    c.capsule(p[0], p[1], 0.07, 0.7);
    c.capsule(p[2], p[2], 0.08, 0.8);
    c.capsule(p[1], p[3], 0.045, 0.85);
    c.capsule(p[3], p[4], 0.04, 1.0);
    c.capsule(p[1], p[5], 0.045, 0.85);
    c.capsule(p[5], p[6], 0.04, 1.0);
    c.into_frame()
}

pub fn render_reference(choreo: &ReferenceChoreography, resolution: usize) -> Vec<Frame> {
    choreo.poses.iter().map(|p| render_reference_frame(p, resolution)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::FEATURE_DIM;

    fn music_with_beats(frames: usize, beats: Vec<usize>, env: f32) -> MusicFeatureTrack {
        let mut features = vec![0.0; frames * FEATURE_DIM];
        for t in 0..frames {
            features[t * FEATURE_DIM] = env;
            features[t * FEATURE_DIM + 21 + (t / 40) % 12] = 1.0;
        }
        MusicFeatureTrack { features, frames, beats, peaks: vec![], tempo_bpm: 90.0, tempo_valid: true }
    }

    #[test]
    fn silence_gives_static_figure() {
        let m = music_with_beats(300, vec![], 0.0);
        let c = synth_choreography(&m, 1, &ChoreoConfig::default());
        assert!(c.speed.iter().all(|&s| s == 0.0));
        let frames = render_reference(&c, 32);
        assert_eq!(frames.len(), 300);
        for w in frames.windows(2) {
            assert!(w[0].mean_abs_diff(&w[1]) < 1e-3);
        }
    }

    #[test]
    fn velocity_vanishes_at_every_beat() {
        let beats: Vec<usize> = (1..9).map(|k| 40 * k).collect();
        let m = music_with_beats(380, beats.clone(), 0.2);
        let c = synth_choreography(&m, 2, &ChoreoConfig::default());
        assert_eq!(c.keyframes, beats);
        for &b in &beats {
            let local = c.speed[b].min(c.speed[b + 1]);
            let peak = c.speed[b - 20..b + 20].iter().cloned().fold(0.0, f64::max);
            assert!(local < 0.05 * peak, "beat {b}: {local} vs {peak}");
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let m = music_with_beats(200, vec![50, 100, 150], 0.3);
        let a = synth_choreography(&m, 7, &ChoreoConfig::default());
        assert_eq!(a, synth_choreography(&m, 7, &ChoreoConfig::default()));
        assert_ne!(a, synth_choreography(&m, 8, &ChoreoConfig::default()));
    }
}
