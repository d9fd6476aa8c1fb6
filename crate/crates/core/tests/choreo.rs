use rhythmotion::audio::extract_music_features;
use rhythmotion::choreo::{
    build_dataset_from_signals, generate_tone_corpus, sample_count, synth_choreography, ChoreoConfig, Dataset, DatasetConfig,
};
use rhythmotion::metrics::{evaluate_velocity, kinematic_beats, nearest_distance, KinematicBeatConfig};

#[test]
fn reference_dancers_pause_on_the_beat() {
    let corpus = generate_tone_corpus(4, 20.0, 22050, 11);
    for (name, sig) in &corpus {
        let music = extract_music_features(sig).unwrap();
        let c = synth_choreography(&music, 3, &ChoreoConfig::default());
        for &b in &music.beats {
            if b == 0 || b + 1 >= music.frames {
                continue;
            }
            assert!(c.keyframes.iter().any(|&k| (k as i64 - b as i64).abs() <= 1), "{name}: beat {b}");
        }
        let kb = kinematic_beats(&c.speed, &KinematicBeatConfig::default());
        let mean: f64 = kb.iter().map(|&k| nearest_distance(k, &music.beats).unwrap() as f64).sum::<f64>() / kb.len() as f64;
        let report = evaluate_velocity(&c.speed, 0, &music, &KinematicBeatConfig::default(), 3.0).unwrap();
        let max = c.speed.iter().cloned().fold(0.0, f64::max);
        let avg = c.speed.iter().sum::<f64>() / c.speed.len() as f64;
        eprintln!(
            "{name}: tempo {:.1} beats {} kinematic {} mean dist {mean:.2} align {:.3} speed max {max:.2} mean {avg:.2}",
            music.tempo_bpm,
            music.beats.len(),
            kb.len(),
            report.beat_align
        );
        assert!(mean <= 2.0, "{name}: mean distance {mean}");
        assert!(report.beat_align >= 0.8, "{name}: {}", report.beat_align);
    }
}

#[test]
fn dataset_counts_split_and_roundtrip() {
    let cfg = DatasetConfig { resolution: 32, stride: 10, ..DatasetConfig::default() };
    let corpus = generate_tone_corpus(4, 8.0, 16000, 5);
    let (ds, failures) = build_dataset_from_signals(corpus.clone(), &cfg, 2).unwrap();
    assert!(failures.is_empty());
    let expected: usize = ds.tracks.iter().map(|t| sample_count(t.music.frames, 30, 10)).sum();
    assert_eq!(ds.num_samples(&(0..4).collect::<Vec<_>>()), expected);
    assert!(ds.train.iter().all(|t| !ds.val.contains(t)));
    assert_eq!(ds.train.len() + ds.val.len(), 4);
    for t in &ds.tracks {
        assert_eq!(t.flows.len(), t.sample_frames.len());
        for &f in &t.sample_frames {
            assert!(t.music.window(f, 30).is_some());
        }
    }
    let dir = tempfile::tempdir().unwrap();
    ds.save(dir.path()).unwrap();
    let back = Dataset::load(dir.path()).unwrap();
    assert_eq!(back.train, ds.train);
    assert_eq!(back.tracks[1].flows, ds.tracks[1].flows);
    assert_eq!(back.tracks[1].music, ds.tracks[1].music);

    // Worker count does not change the result.
    let (single, _) = build_dataset_from_signals(corpus, &cfg, 1).unwrap();
    assert_eq!(single, ds);
    let dir2 = tempfile::tempdir().unwrap();
    single.save(dir2.path()).unwrap();
    let m1 = std::fs::read(dir.path().join("manifest.json")).unwrap();
    let m2 = std::fs::read(dir2.path().join("manifest.json")).unwrap();
    assert_eq!(m1, m2);
}

#[test]
fn too_few_tracks_is_an_error() {
    let corpus = generate_tone_corpus(1, 6.0, 16000, 5);
    assert!(build_dataset_from_signals(corpus, &DatasetConfig::default(), 1).is_err());
}
