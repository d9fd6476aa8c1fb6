use serde::{Deserialize, Serialize};

use super::MetricsError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Note {
    Sixteenth,
    ThirtySecond,
    SixtyFourth,
}

impl Note {
    pub const ALL: [Note; 3] = [Note::Sixteenth, Note::ThirtySecond, Note::SixtyFourth];

    /// Denominator of the note value (16, 32, 64).
    pub fn denominator(self) -> u32 {
        match self {
            Note::Sixteenth => 16,
            Note::ThirtySecond => 32,
            Note::SixtyFourth => 64,
        }
    }
}

/// Note length in frames at 60 FPS: a quarter note lasts `3600 / tempo`.
pub fn note_threshold_frames(tempo_bpm: f64, note: Note) -> f64 {
    let quarter = 3600.0 / tempo_bpm;
    quarter / (note.denominator() as f64 / 4.0)
}

/// Distance from `t` to the closest element of the sorted list `refs`.
pub fn nearest_distance(t: usize, refs: &[usize]) -> Option<usize> {
    let i = refs.partition_point(|&r| r < t);
    let after = refs.get(i).map(|&r| r - t);
    let before = i.checked_sub(1).map(|j| t - refs[j]);
    match (before, after) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, b) => a.or(b),
    }
}

/// Mean Gaussian kernel of each kinematic beat's distance to its nearest
/// reference beat. An empty `kinematic` list scores 0.
pub fn beat_align(kinematic: &[usize], reference: &[usize], sigma: f64) -> Result<f64, MetricsError> {
    if reference.is_empty() {
        return Err(MetricsError::EmptyReference);
    }
    if !(sigma > 0.0) {
        return Err(MetricsError::InvalidParameter(format!("sigma must be positive, got {sigma}")));
    }
    if kinematic.is_empty() {
        return Ok(0.0);
    }
    let s: f64 = kinematic
        .iter()
        .map(|&t| {
            let d = nearest_distance(t, reference).unwrap() as f64;
            (-(d * d) / (2.0 * sigma * sigma)).exp()
        })
        .sum();
    Ok(s / kinematic.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Precision/recall/F1 where a beat matches when its nearest counterpart in
/// the other list is strictly closer than the note length.
pub fn f1_at_note(kinematic: &[usize], reference: &[usize], tempo_bpm: f64, note: Note) -> Prf {
    if kinematic.is_empty() || reference.is_empty() {
        return Prf::default();
    }
    let theta = note_threshold_frames(tempo_bpm, note);
    let hits = |from: &[usize], to: &[usize]| from.iter().filter(|&&t| (nearest_distance(t, to).unwrap() as f64) < theta).count();
    let precision = hits(kinematic, reference) as f64 / kinematic.len() as f64;
    let recall = hits(reference, kinematic) as f64 / reference.len() as f64;
    let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
    Prf { precision, recall, f1 }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thresholds() {
        assert_eq!(note_threshold_frames(120.0, Note::Sixteenth), 7.5);
        assert_eq!(note_threshold_frames(120.0, Note::SixtyFourth), 1.875);
        assert_eq!(note_threshold_frames(60.0, Note::Sixteenth), 15.0);
        assert_eq!(note_threshold_frames(97.0, Note::ThirtySecond) * 2.0, note_threshold_frames(97.0, Note::Sixteenth));
    }

    #[test]
    fn align_hand_cases() {
        assert_eq!(beat_align(&[3, 9, 40], &[3, 9, 40], 3.0).unwrap(), 1.0);
        assert_eq!(beat_align(&[10], &[13], 3.0).unwrap(), (-0.5f64).exp());
        let two = beat_align(&[10, 20], &[10, 23], 3.0).unwrap();
        assert!((two - (1.0 + (-0.5f64).exp()) / 2.0).abs() < 1e-15);
        assert_eq!(beat_align(&[], &[4], 3.0).unwrap(), 0.0);
        assert!(beat_align(&[4], &[], 3.0).is_err());
    }

    #[test]
    fn f1_hand_cases() {
        let same = f1_at_note(&[5, 50], &[5, 50], 120.0, Note::SixtyFourth);
        assert_eq!((same.precision, same.recall, same.f1), (1.0, 1.0, 1.0));
        // theta = 5 frames at 180 BPM sixteenth.
        let p = f1_at_note(&[10, 20], &[10, 30], 180.0, Note::Sixteenth);
        assert_eq!((p.precision, p.recall, p.f1), (0.5, 0.5, 0.5));
        // theta = 2 frames at 450/2 = 225 BPM thirty-second.
        let q = f1_at_note(&[10, 11], &[10], 225.0, Note::ThirtySecond);
        assert_eq!((q.precision, q.recall, q.f1), (1.0, 1.0, 1.0));
        assert_eq!(f1_at_note(&[], &[1], 120.0, Note::Sixteenth), Prf::default());
    }

    #[test]
    fn threshold_is_strict() {
        // 120 BPM sixty-fourth: theta = 1.875; 60 BPM sixteenth: theta = 15.
        let p = f1_at_note(&[0], &[15], 60.0, Note::Sixteenth);
        assert_eq!(p.f1, 0.0);
        let p = f1_at_note(&[0], &[14], 60.0, Note::Sixteenth);
        assert_eq!(p.f1, 1.0);
    }
}
