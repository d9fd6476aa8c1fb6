use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{beat_align, f1_at_note, kinematic_beats, KinematicBeatConfig, MetricsError, Note, Prf};
use crate::audio::MusicFeatureTrack;
use crate::env::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NoteScores {
    pub sixteenth: Prf,
    pub thirty_second: Prf,
    pub sixty_fourth: Prf,
}

impl NoteScores {
    fn compute(k: &[usize], r: &[usize], tempo: f64) -> Self {
        Self {
            sixteenth: f1_at_note(k, r, tempo, Note::Sixteenth),
            thirty_second: f1_at_note(k, r, tempo, Note::ThirtySecond),
            sixty_fourth: f1_at_note(k, r, tempo, Note::SixtyFourth),
        }
    }

    pub fn get(&self, note: Note) -> Prf {
        match note {
            Note::Sixteenth => self.sixteenth,
            Note::ThirtySecond => self.thirty_second,
            Note::SixtyFourth => self.sixty_fourth,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub beat_align: f64,
    pub peak_align: f64,
    pub beats: NoteScores,
    pub peaks: NoteScores,
    pub tempo_bpm: f64,
    pub sigma: f64,
    pub kinematic_beats: Vec<usize>,
    pub music_beats: Vec<usize>,
    pub music_peaks: Vec<usize>,
    /// No kinematic beats were found; align scores are 0 by definition.
    pub no_kinematic_beats: bool,
    /// A reference list was empty; its align score is reported as 0.
    pub no_reference: bool,
}

/// Scores a velocity series whose element `i` belongs to music frame
/// `first_frame + i`. References are restricted to the covered frames.
pub fn evaluate_velocity(
    velocity: &[f64],
    first_frame: usize,
    music: &MusicFeatureTrack,
    cfg: &KinematicBeatConfig,
    sigma: f64,
) -> Result<CorrelationReport, MetricsError> {
    let needed = first_frame + velocity.len();
    if needed > music.frames {
        return Err(MetricsError::AlignmentMismatch { needed, frames: music.frames });
    }
    let covered = |v: &[usize]| v.iter().copied().filter(|&t| t >= first_frame && t < needed).collect::<Vec<_>>();
    let kb: Vec<usize> = kinematic_beats(velocity, cfg).into_iter().map(|t| t + first_frame).collect();
    let mb = covered(&music.beats);
    let mp = covered(&music.peaks);
    let tempo = music.tempo_bpm;
    let align = |r: &[usize]| match beat_align(&kb, r, sigma) {
        Ok(v) => Ok(v),
        Err(MetricsError::EmptyReference) => Ok(0.0),
        Err(e) => Err(e),
    };
    Ok(CorrelationReport {
        beat_align: align(&mb)?,
        peak_align: align(&mp)?,
        beats: NoteScores::compute(&kb, &mb, tempo),
        peaks: NoteScores::compute(&kb, &mp, tempo),
        tempo_bpm: tempo,
        sigma,
        no_kinematic_beats: kb.is_empty(),
        no_reference: mb.is_empty() || mp.is_empty(),
        kinematic_beats: kb,
        music_beats: mb,
        music_peaks: mp,
    })
}

/// Row `k` of a trajectory is the state after the action at music frame
/// `start_frame + k`, i.e. the pose shown at frame `start_frame + k + 1`.
pub fn evaluate_trajectory(
    traj: &Trajectory,
    music: &MusicFeatureTrack,
    cfg: &KinematicBeatConfig,
    sigma: f64,
) -> Result<CorrelationReport, MetricsError> {
    evaluate_velocity(&traj.velocities(), traj.header.start_frame + 1, music, cfg, sigma)
}

impl CorrelationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One header line and one value line.
    pub fn to_csv(&self) -> String {
        let mut head = vec!["beat_align".to_string(), "peak_align".to_string()];
        let mut vals = vec![format!("{}", self.beat_align), format!("{}", self.peak_align)];
        for (name, s) in [("beat", &self.beats), ("peak", &self.peaks)] {
            for note in Note::ALL {
                let p = s.get(note);
                let d = note.denominator();
                for (m, v) in [("precision", p.precision), ("recall", p.recall), ("f1", p.f1)] {
                    head.push(format!("{name}_{m}_{d}"));
                    vals.push(format!("{v}"));
                }
            }
        }
        head.extend(["tempo_bpm", "n_kinematic", "n_beats", "n_peaks"].map(String::from));
        vals.push(format!("{}", self.tempo_bpm));
        vals.push(self.kinematic_beats.len().to_string());
        vals.push(self.music_beats.len().to_string());
        vals.push(self.music_peaks.len().to_string());
        format!("{}\n{}\n", head.join(","), vals.join(","))
    }

    /// Grid with Beat and Peak rows: F1 at the three note lengths plus the
    /// align score.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<6} {:>8} {:>8} {:>8} {:>10}", "", "F1@1/16", "F1@1/32", "F1@1/64", "AlignScore");
        for (name, s, a) in [("Beat", &self.beats, self.beat_align), ("Peak", &self.peaks, self.peak_align)] {
            let _ = writeln!(
                out,
                "{:<6} {:>8.3} {:>8.3} {:>8.3} {:>10.3}",
                name, s.sixteenth.f1, s.thirty_second.f1, s.sixty_fourth.f1, a
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::FEATURE_DIM;

    fn music(frames: usize, beats: Vec<usize>, peaks: Vec<usize>) -> MusicFeatureTrack {
        MusicFeatureTrack { features: vec![0.0; frames * FEATURE_DIM], frames, beats, peaks, tempo_bpm: 120.0, tempo_valid: true }
    }

    #[test]
    fn velocity_with_pauses_on_beats_scores_perfectly() {
        let beats: Vec<usize> = (0..11).map(|k| 10 + 30 * k).collect();
        let m = music(320, beats.clone(), beats.clone());
        // |sin| with zeros at 10 + 30k, starting at frame 0.
        let v: Vec<f64> = (0..320).map(|t| ((t as f64 - 10.0) * std::f64::consts::PI / 30.0).sin().abs()).collect();
        let r = evaluate_velocity(&v, 0, &m, &KinematicBeatConfig::default(), 3.0).unwrap();
        assert!(r.beat_align > 0.99, "{r:?}");
        assert_eq!(r.beats.sixteenth.f1, 1.0);
        for x in [r.beat_align, r.peak_align, r.beats.sixty_fourth.f1, r.peaks.sixteenth.recall] {
            assert!((0.0..=1.0).contains(&x));
        }
    }

    #[test]
    fn mismatch_is_error() {
        let m = music(100, vec![50], vec![]);
        assert!(matches!(
            evaluate_velocity(&[0.0; 90], 20, &m, &KinematicBeatConfig::default(), 3.0),
            Err(MetricsError::AlignmentMismatch { .. })
        ));
    }

    #[test]
    fn csv_and_table_shapes() {
        let m = music(200, vec![40, 80], vec![60]);
        let v: Vec<f64> = (0..200).map(|t| ((t as f64) * 0.1).sin().abs()).collect();
        let r = evaluate_velocity(&v, 0, &m, &KinematicBeatConfig::default(), 3.0).unwrap();
        let csv = r.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0].split(',').count(), lines[1].split(',').count());
        let t = r.table();
        assert!(t.contains("Beat") && t.contains("Peak") && t.contains("F1@1/16"));
        let back: CorrelationReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
    }
}
