use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rhythmotion::audio::synth::tone_track;
use rhythmotion::audio::{extract_music_features, MusicFeatureTrack, FEATURE_DIM};
use rhythmotion::env::{Action, AgentKind, Env, EnvConfig, ACTION_LIMIT};
use rhythmotion::flow::{crop_resize, flow_l1_distance, FlowField};
use rhythmotion::metrics::{beat_align, f1_at_note, note_threshold_frames, Note};
use rhythmotion::reward::{info_nce, reward};
use rhythmotion::rl::{compute_gae, RolloutBuffer};

fn beats(max_len: usize) -> impl Strategy<Value = Vec<usize>> {
    prop::collection::btree_set(0usize..2000, 1..max_len).prop_map(|s| s.into_iter().collect())
}

fn nonzero_vec(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, dim).prop_filter("nonzero", |v| v.iter().map(|x| x * x).sum::<f64>() > 1e-6)
}

fn flow(w: usize, h: usize) -> impl Strategy<Value = FlowField> {
    (prop::collection::vec(-5.0f32..5.0, w * h), prop::collection::vec(-5.0f32..5.0, w * h))
        .prop_map(move |(u, v)| FlowField { width: w, height: h, u, v })
}

fn silent_music(frames: usize) -> MusicFeatureTrack {
    MusicFeatureTrack { features: vec![0.0; frames * FEATURE_DIM], frames, beats: vec![], peaks: vec![], tempo_bpm: 120.0, tempo_valid: false }
}

proptest! {
    #[test]
    fn beat_align_in_unit_interval(k in beats(40), r in beats(40), sigma in 0.5f64..10.0) {
        let s = beat_align(&k, &r, sigma).unwrap();
        prop_assert!((0.0..=1.0).contains(&s));
    }

    #[test]
    fn moving_a_beat_closer_never_lowers_alignment(k in beats(30), r in beats(30), pick in any::<prop::sample::Index>(), sigma in 0.5f64..6.0) {
        let i = pick.index(k.len());
        let t = k[i];
        let nearest = *r.iter().min_by_key(|&&b| b.abs_diff(t)).unwrap();
        if nearest != t {
            let mut moved = k.clone();
            moved[i] = if nearest > t { t + 1 } else { t - 1 };
            moved.sort_unstable();
            prop_assert!(beat_align(&moved, &r, sigma).unwrap() >= beat_align(&k, &r, sigma).unwrap() - 1e-15);
        }
    }

    #[test]
    fn scores_are_shift_equivariant(k in beats(30), r in beats(30), shift in 0usize..500, tempo in 60.0f64..200.0) {
        let s = |v: &[usize]| v.iter().map(|x| x + shift).collect::<Vec<_>>();
        prop_assert_eq!(beat_align(&k, &r, 3.0).unwrap(), beat_align(&s(&k), &s(&r), 3.0).unwrap());
        for note in Note::ALL {
            prop_assert_eq!(f1_at_note(&k, &r, tempo, note), f1_at_note(&s(&k), &s(&r), tempo, note));
        }
    }

    #[test]
    fn note_threshold_halves(tempo in 20.0f64..400.0) {
        let [a, b, c] = Note::ALL.map(|n| note_threshold_frames(tempo, n));
        prop_assert_eq!(a, 2.0 * b);
        prop_assert_eq!(b, 2.0 * c);
    }

    #[test]
    fn reward_is_scale_invariant_cosine(z in nonzero_vec(8), w in nonzero_vec(8), c in 0.01f64..100.0) {
        prop_assert!((reward(&z, &z).unwrap() - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = z.iter().map(|x| -x).collect();
        prop_assert!((reward(&z, &neg).unwrap() + 1.0).abs() < 1e-12);
        let scaled: Vec<f64> = w.iter().map(|x| x * c).collect();
        prop_assert!((reward(&z, &w).unwrap() - reward(&z, &scaled).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn info_nce_is_nonnegative_and_scale_invariant(
        rows in prop::collection::vec((nonzero_vec(5), nonzero_vec(5)), 2..10),
        c in 0.01f64..100.0,
        tau in 0.05f64..2.0,
    ) {
        let (zo, zm): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
        let l = info_nce(&zo, &zm, tau).unwrap();
        prop_assert!(l >= 0.0);
        let scaled: Vec<Vec<f64>> = zo.iter().map(|r| r.iter().map(|x| x * c).collect()).collect();
        prop_assert!((info_nce(&scaled, &zm, tau).unwrap() - l).abs() < 1e-9);
    }

    #[test]
    fn flow_l1_is_a_pseudometric(a in flow(6, 5), b in flow(6, 5)) {
        let ab = flow_l1_distance(&a, &b).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(ab, flow_l1_distance(&b, &a).unwrap());
        prop_assert_eq!(flow_l1_distance(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn crop_resize_scales_constant_fields(u in -4.0f32..4.0, v in -4.0f32..4.0, w in 16usize..64, h in 16usize..64, p in 8usize..32, seed in any::<u64>()) {
        let f = FlowField::uniform(w, h, u, v);
        let patch = crop_resize(&f, &mut ChaCha8Rng::seed_from_u64(seed), p).unwrap();
        let ratio = p as f64 / patch.crop.0;
        for (pu, pv) in patch.u.iter().zip(&patch.v) {
            prop_assert!((*pu as f64 - u as f64 * ratio).abs() < 1e-5 * (1.0 + ratio * u.abs() as f64));
            prop_assert!((*pv as f64 - v as f64 * ratio).abs() < 1e-5 * (1.0 + ratio * v.abs() as f64));
        }
    }

    #[test]
    fn arm_rollouts_respect_limits(actions in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 1..200), seed in any::<u64>()) {
        let env = Env::new(EnvConfig::new(AgentKind::Arm));
        let music = silent_music(400);
        let mut s = env.reset(seed, &music, 0).unwrap();
        for a in actions {
            let tr = env.advance(&s, &Action::Continuous(a)).unwrap();
            prop_assert!(tr.state.qdot.iter().all(|q| q.abs() <= ACTION_LIMIT));
            prop_assert!(tr.penalty == 0.0 || tr.penalty == -1.0);
            s = tr.state;
            if tr.done {
                break;
            }
        }
    }

    #[test]
    fn cartpole_ends_only_by_exit_cap_or_music(actions in prop::collection::vec(0usize..2, 1..400), seed in any::<u64>()) {
        let env = Env::new(EnvConfig::new(AgentKind::CartPole));
        let music = silent_music(3000);
        let mut s = env.reset(seed, &music, 0).unwrap();
        let again = env.reset(seed, &music, 0).unwrap();
        prop_assert_eq!(&s, &again);
        for a in actions {
            let tr = env.advance(&s, &Action::Discrete(a)).unwrap();
            prop_assert!(tr.penalty == 0.0 || tr.penalty == -1.0);
            let exited = tr.state.q[0].abs() > env.config.cartpole.x_view;
            prop_assert_eq!(tr.penalty < 0.0, exited);
            prop_assert_eq!(tr.done, exited || tr.state.t >= env.config.episode_cap || tr.state.cursor.frame >= tr.state.cursor.end);
            s = tr.state;
            if tr.done {
                break;
            }
        }
    }

    #[test]
    fn gae_matches_explicit_sums(
        steps in prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0, 0u8..10, -2.0f64..2.0), 20),
        last in -2.0f64..2.0,
        gamma in 0.5f64..1.0,
        lambda in 0.5f64..1.0,
    ) {
        let mut buf = RolloutBuffer::new(1);
        for &(r, v, kind, tv) in &steps {
            buf.obs.push(0.0);
            buf.actions.push(vec![0.0]);
            buf.log_probs.push(0.0);
            buf.rewards.push(r);
            buf.raw.push(r);
            buf.values.push(v);
            buf.penalties.push(0.0);
            buf.center_factors.push(1.0);
            // 0: terminal, 1: truncated, otherwise continuing.
            buf.dones.push(kind < 2);
            buf.terminals.push(kind == 0);
            buf.truncation_values.push(if kind == 1 { tv } else { 0.0 });
        }
        buf.last_value = last;
        let (adv, ret) = compute_gae(&buf, gamma, lambda);
        let n = buf.len();
        for t in 0..n {
            let mut expect = 0.0;
            let mut k = t;
            loop {
                let next = if buf.terminals[k] {
                    0.0
                } else if buf.dones[k] {
                    buf.truncation_values[k]
                } else if k + 1 < n {
                    buf.values[k + 1]
                } else {
                    buf.last_value
                };
                let delta = buf.rewards[k] + gamma * next - buf.values[k];
                expect += (gamma * lambda).powi((k - t) as i32) * delta;
                if buf.dones[k] || k + 1 == n {
                    break;
                }
                k += 1;
            }
            prop_assert!((adv[t] - expect).abs() < 1e-8);
            prop_assert!((ret[t] - (expect + buf.values[t])).abs() < 1e-8);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn feature_tracks_are_aligned_and_deterministic(seed in any::<u64>(), secs in 4.0f64..9.0) {
        let (signal, _) = tone_track(seed, secs, 22050);
        let a = extract_music_features(&signal).unwrap();
        prop_assert!((a.frames as f64 - signal.duration_secs() * 60.0).abs() <= 1.0);
        prop_assert!(a.beats.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(a.peaks.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(a.features.iter().all(|v| v.is_finite()));
        prop_assert_eq!(a, extract_music_features(&signal).unwrap());
    }
}
