use std::path::{Path, PathBuf};
use std::sync::atomic::Ordering;

use rhythmotion::audio::{decode_wav, extract_music_features, read_mft, write_mft, MusicFeatureTrack, FEATURE_DIM, MFT_MAGIC};
use rhythmotion::baselines::{bpm_control_policy, train_dancer_no_rm, BaselineError, BpmControlConfig, BpmController};
use rhythmotion::choreo::{build_dataset, build_dataset_from_signals, generate_tone_corpus, Dataset};
use rhythmotion::env::{read_traj, write_traj, AgentKind, Env, EnvState};
use rhythmotion::metrics::evaluate_trajectory;
use rhythmotion::reward::{train_reward_model, RewardModel};
use rhythmotion::rl::{observation_frame, play_track, train_dancer, CurveRow, Dance, DanceTask, ObservationKind, Policy, RewardModelTask, RlError};
use rhythmotion::derive_seed;
use serde::{Deserialize, Serialize};

use crate::config::{self, RunConfig};
use crate::gif_out::write_gif;
use crate::{log, Cli, CliError, Command, Common, VERBOSITY};

type Result<T> = std::result::Result<T, CliError>;

pub const BPM_FORMAT: &str = "rhythmotion-bpm-control";
const BPM_VERSION: u32 = 1;

/// The BPM-control baseline has no parameters; its "policy" file records
/// the agent and target bound.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BpmPolicyFile {
    format: String,
    version: u32,
    agent: AgentKind,
    limit: f64,
}

fn setup(common: &Common) -> Result<RunConfig> {
    let (mut cfg, seed_in_config) = config::load(common.config.as_deref(), &common.set)?;
    let seed = config::resolve_seed(common.seed, &cfg, seed_in_config)?;
    cfg.set_seed(seed);
    if let Some(w) = common.workers {
        cfg.workers = w;
    }
    if common.verbose {
        cfg.verbosity = 2;
    } else if common.quiet {
        cfg.verbosity = 0;
    }
    Ok(cfg)
}

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = setup(&cli.common)?;
    match &cli.command {
        Command::SynthData { tone_secs: Some(s), .. } => cfg.synth.tone_secs = *s,
        Command::TrainReward { epochs, shuffle_pairs, .. } => {
            if let Some(e) = epochs {
                cfg.reward.epochs = *e;
            }
            cfg.reward.shuffle_pairs |= *shuffle_pairs;
        }
        Command::TrainDancer { steps: Some(s), .. } => cfg.ppo.total_steps = *s,
        _ => {}
    }
    cfg.validate()?;
    VERBOSITY.store(cfg.verbosity, Ordering::Relaxed);
    log(2, format_args!("seed {} workers {}", cfg.seed, cfg.workers));
    match cli.command {
        Command::Analyze { audio, out } => analyze(&audio, &out),
        Command::SynthData { audio_dir, generate_tones, out, .. } => synth_data(&cfg, audio_dir.as_deref(), generate_tones, &out),
        Command::TrainReward { dataset, out, log, .. } => train_reward(&cfg, &dataset, &out, log),
        Command::TrainDancer { agent, reward_ckpt, no_rm, bpm, dataset, out, curve, .. } => {
            let agent: AgentKind = agent.parse().map_err(CliError::input)?;
            if bpm {
                write_bpm_policy(agent, &out)
            } else {
                let dataset = dataset.ok_or_else(|| CliError::Input("--dataset is required".into()))?;
                let curve = curve.unwrap_or_else(|| out.with_extension("csv"));
                if no_rm {
                    train_no_rm(&cfg, agent, &dataset, &out, &curve)
                } else {
                    let ckpt = reward_ckpt.ok_or_else(|| CliError::Input("--reward-ckpt is required".into()))?;
                    train_with_rm(&cfg, agent, &ckpt, &dataset, &out, &curve)
                }
            }
        }
        Command::Dance { policy, audio, out, reward_ckpt, sample, gif, gif_scale, no_frames } => {
            dance(&cfg, &policy, &audio, &out, reward_ckpt.as_deref(), DanceOutput { sample, gif, gif_scale, frames: !no_frames })
        }
        Command::Eval { trajectory, audio, json, csv } => eval(&cfg, &trajectory, &audio, json.as_deref(), csv.as_deref()),
    }
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
    }
    Ok(())
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    create_parent(path)?;
    std::fs::write(path, bytes).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

/// A `.mft` feature track as-is, anything else decoded as WAV.
pub fn load_music(path: &Path) -> Result<MusicFeatureTrack> {
    let mut magic = [0u8; 4];
    let is_mft = std::fs::File::open(path)
        .and_then(|mut f| std::io::Read::read_exact(&mut f, &mut magic))
        .map(|_| &magic == MFT_MAGIC)
        .unwrap_or(false);
    if is_mft {
        return read_mft(path).map_err(CliError::classify);
    }
    let signal = decode_wav(path).map_err(CliError::classify)?;
    extract_music_features(&signal).map_err(CliError::classify)
}

fn track_name(path: &Path) -> String {
    path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

fn analyze(audio: &Path, out: &Path) -> Result<()> {
    let signal = decode_wav(audio).map_err(CliError::classify)?;
    let track = extract_music_features(&signal).map_err(CliError::classify)?;
    create_parent(out)?;
    write_mft(out, &track).map_err(CliError::classify)?;
    println!(
        "{}: {} frames x {} features, tempo {:.1} BPM{}, {} beats, {} peaks",
        out.display(),
        track.frames,
        FEATURE_DIM,
        track.tempo_bpm,
        if track.tempo_valid { "" } else { " (fallback)" },
        track.beats.len(),
        track.peaks.len()
    );
    Ok(())
}

fn synth_data(cfg: &RunConfig, audio_dir: Option<&Path>, tones: Option<usize>, out: &Path) -> Result<()> {
    let (ds, skipped) = match tones {
        Some(n) => {
            log(1, format_args!("synthesising {n} tone tracks of {} s", cfg.synth.tone_secs));
            let corpus = generate_tone_corpus(n, cfg.synth.tone_secs, cfg.synth.sample_rate, cfg.seed);
            build_dataset_from_signals(corpus, &cfg.dataset, cfg.workers).map_err(CliError::classify)?
        }
        None => {
            let dir = audio_dir.ok_or_else(|| CliError::Input("an audio directory or --generate-tones is required".into()))?;
            let entries = std::fs::read_dir(dir).map_err(|e| CliError::Input(format!("{}: {e}", dir.display())))?;
            let mut paths: Vec<PathBuf> = entries
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
                .collect();
            paths.sort();
            log(1, format_args!("building dataset from {} WAV files", paths.len()));
            build_dataset(&paths, &cfg.dataset, cfg.workers).map_err(CliError::classify)?
        }
    };
    for s in &skipped {
        log(1, format_args!("skipped {s}"));
    }
    ds.save(out).map_err(CliError::classify)?;
    println!(
        "{}: {} tracks ({} train / {} val), {} train samples, {} val samples",
        out.display(),
        ds.tracks.len(),
        ds.train.len(),
        ds.val.len(),
        ds.num_samples(&ds.train),
        ds.num_samples(&ds.val)
    );
    Ok(())
}

fn load_dataset(dir: &Path) -> Result<Dataset> {
    Dataset::load(dir).map_err(CliError::classify)
}

fn train_reward(cfg: &RunConfig, dataset: &Path, out: &Path, log_path: Option<PathBuf>) -> Result<()> {
    let ds = load_dataset(dataset)?;
    if ds.config.half_window != cfg.reward.model.half_window {
        return Err(CliError::Input(format!(
            "dataset half window {} differs from reward.model.half_window {}",
            ds.config.half_window, cfg.reward.model.half_window
        )));
    }
    let (model, train_log) = train_reward_model(&ds, &cfg.reward, |r| {
        log(1, format_args!("epoch {:>3} loss {:.4} val_loss {:.4} top1 {:.3}", r.epoch, r.loss, r.val_loss, r.top1_retrieval))
    })
    .map_err(CliError::classify)?;
    create_parent(out)?;
    model.save(out, cfg.seed).map_err(CliError::classify)?;
    let log_path = log_path.unwrap_or_else(|| out.with_extension("csv"));
    write_file(&log_path, train_log.to_csv())?;
    if let Some(best) = train_log.best() {
        println!(
            "best epoch {} val_loss {:.4}; validation top-1 retrieval accuracy {:.4} ({} candidates)",
            best.epoch, best.val_loss, best.top1_retrieval, cfg.reward.val_candidates
        );
    }
    Ok(())
}

fn curve_logger(row: &CurveRow) {
    log(
        1,
        format_args!(
            "iter {:>4} steps {:>7} reward {:.4} raw {:.4} ep_len {:.0} exits {:.2}",
            row.iteration, row.steps, row.mean_reward, row.mean_raw, row.mean_ep_len, row.view_exit_fraction
        ),
    );
    log(2, format_args!("  policy {:.4} value {:.4} entropy {:.4} kl {:.5}", row.policy_loss, row.value_loss, row.entropy, row.approx_kl));
}

fn train_with_rm(cfg: &RunConfig, agent: AgentKind, ckpt: &Path, dataset: &Path, out: &Path, curve: &Path) -> Result<()> {
    let model = RewardModel::load(ckpt).map_err(CliError::classify)?;
    let ds = load_dataset(dataset)?;
    let tracks: Vec<MusicFeatureTrack> = ds.train.iter().map(|&i| ds.tracks[i].music.clone()).collect();
    let env_config = cfg.env.env_config(agent, model.config.half_window);
    let (policy, lc) = train_dancer(&model, &tracks, &env_config, &cfg.ppo, cfg.workers, curve_logger).map_err(CliError::classify)?;
    create_parent(out)?;
    policy.save(out, cfg.seed).map_err(CliError::classify)?;
    write_file(curve, lc.to_csv())?;
    println!("{}: {} policy trained for {} steps against reward model {}", out.display(), agent, cfg.ppo.total_steps, model.content_hash());
    Ok(())
}

fn train_no_rm(cfg: &RunConfig, agent: AgentKind, dataset: &Path, out: &Path, curve: &Path) -> Result<()> {
    let ds = load_dataset(dataset)?;
    let env_config = cfg.env.env_config(agent, ds.config.half_window);
    let (policy, lc) = train_dancer_no_rm(&ds, &env_config, &cfg.ppo, cfg.workers, curve_logger).map_err(CliError::classify)?;
    create_parent(out)?;
    policy.save(out, cfg.seed).map_err(CliError::classify)?;
    write_file(curve, lc.to_csv())?;
    println!("{}: {} policy trained for {} steps with the flow-matching reward", out.display(), agent, cfg.ppo.total_steps);
    Ok(())
}

fn write_bpm_policy(agent: AgentKind, out: &Path) -> Result<()> {
    if agent != AgentKind::Arm {
        return Err(CliError::classify(BaselineError::UnsupportedAgent(format!("BPM-based control needs joint-velocity actions; {agent} has none"))));
    }
    let file = BpmPolicyFile { format: BPM_FORMAT.into(), version: BPM_VERSION, agent, limit: rhythmotion::env::ACTION_LIMIT };
    let text = serde_json::to_string_pretty(&file).map_err(CliError::runtime)?;
    write_file(out, text + "\n")?;
    println!("{}: BPM-based control for the {agent} agent", out.display());
    Ok(())
}

enum LoadedPolicy {
    Neural(Policy),
    Bpm(BpmPolicyFile),
}

fn load_policy(path: &Path) -> Result<LoadedPolicy> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    if bytes.starts_with(b"{") {
        let f: BpmPolicyFile = serde_json::from_slice(&bytes).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        if f.format != BPM_FORMAT || f.version != BPM_VERSION {
            return Err(CliError::Input(format!("{}: unsupported policy file {} v{}", path.display(), f.format, f.version)));
        }
        return Ok(LoadedPolicy::Bpm(f));
    }
    Policy::from_bytes(&bytes).map(LoadedPolicy::Neural).map_err(CliError::classify)
}

struct DanceOutput {
    sample: bool,
    gif: bool,
    gif_scale: usize,
    frames: bool,
}

#[derive(Serialize)]
struct DanceSummary {
    agent: AgentKind,
    music: String,
    seed: u64,
    start_frame: usize,
    actions: usize,
    frames: usize,
    deterministic: bool,
    /// Mean cosine similarity under the reward model, when one was given.
    mean_reward_similarity: Option<f64>,
}

fn dance(cfg: &RunConfig, policy_path: &Path, audio: &Path, out: &Path, reward_ckpt: Option<&Path>, opts: DanceOutput) -> Result<()> {
    let policy = load_policy(policy_path)?;
    let music = load_music(audio)?;
    let model = reward_ckpt.map(|p| RewardModel::load(p).map_err(CliError::classify)).transpose()?;
    let name = track_name(audio);
    let tracks = std::slice::from_ref(&music);
    let task = model.as_ref().map(|m| RewardModelTask::new(m, tracks, cfg.workers)).transpose().map_err(CliError::classify)?;
    let scorer = task.as_ref().map(|t| t as &dyn DanceTask);
    let half_window = model.as_ref().map_or(cfg.dataset.half_window, |m| m.config.half_window);
    let render = opts.frames || opts.gif;
    let seed = cfg.seed;

    let (agent, dance) = match policy {
        LoadedPolicy::Bpm(f) => {
            let env = Env::new(cfg.env.env_config(f.agent, half_window));
            let mut bc = BpmControlConfig::from_music(&music, derive_seed(seed, 0xb9));
            bc.limit = f.limit;
            let mut ctl = BpmController::new(bc).map_err(CliError::classify)?;
            let controller = |s: &EnvState| bpm_control_policy(&mut ctl, s).map_err(|e| RlError::InvalidConfig(e.to_string()));
            (f.agent, play_track(&env, &music, &name, 0, seed, controller, scorer, render).map_err(CliError::classify)?)
        }
        LoadedPolicy::Neural(p) => {
            let agent = p.meta.agent;
            if p.meta.observation == ObservationKind::MusicEmbedding {
                let Some(m) = &model else {
                    return Err(CliError::Input("this policy observes reward-model embeddings; pass --reward-ckpt".into()));
                };
                if let Some(h) = &p.meta.reward_model {
                    if *h != m.content_hash() {
                        return Err(CliError::Input(format!("policy was trained against reward model {h}, got {}", m.content_hash())));
                    }
                }
            }
            let env = Env::new(cfg.env.env_config(agent, half_window));
            (agent, run_neural(&p, &env, &music, &name, task.as_ref(), seed, !opts.sample, render)?)
        }
    };

    std::fs::create_dir_all(out).map_err(|e| CliError::Runtime(format!("{}: {e}", out.display())))?;
    write_traj(&out.join("dance.trj"), &dance.trajectory).map_err(CliError::classify)?;
    // Frame k shows the pose of trajectory row k; the initial pose is dropped.
    let frames = if render { &dance.frames[1..] } else { &[][..] };
    if opts.frames {
        let dir = out.join("frames");
        std::fs::create_dir_all(&dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
        for (k, f) in frames.iter().enumerate() {
            write_file(&dir.join(format!("frame_{k:05}.pgm")), f.to_pgm())?;
        }
    }
    if opts.gif {
        let path = out.join("dance.gif");
        write_gif(&path, frames, opts.gif_scale).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    }
    let summary = DanceSummary {
        agent,
        music: name,
        seed,
        start_frame: dance.trajectory.header.start_frame,
        actions: dance.trajectory.len(),
        frames: frames.len(),
        deterministic: !opts.sample,
        mean_reward_similarity: scorer.map(|_| dance.mean_raw_score()),
    };
    let text = serde_json::to_string_pretty(&summary).map_err(CliError::runtime)?;
    write_file(&out.join("summary.json"), text + "\n")?;
    println!(
        "{}: {} actions{}",
        out.display(),
        summary.actions,
        summary.mean_reward_similarity.map(|s| format!(", mean similarity {s:.4}")).unwrap_or_default()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run_neural(
    policy: &Policy,
    env: &Env,
    music: &MusicFeatureTrack,
    name: &str,
    task: Option<&RewardModelTask>,
    seed: u64,
    deterministic: bool,
    render: bool,
) -> Result<Dance> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(derive_seed(seed, 0xda9));
    let observation = policy.meta.observation;
    let controller = |state: &EnvState| -> std::result::Result<_, RlError> {
        let frame = observation_frame(state);
        let obs = match (observation, task) {
            (ObservationKind::MusicEmbedding, Some(t)) => t.observe(0, frame, state)?,
            (ObservationKind::MusicEmbedding, None) => return Err(RlError::InvalidConfig("missing reward model".into())),
            (ObservationKind::RawMusic, _) => {
                if frame >= music.frames {
                    return Err(RlError::WindowRange { frame, frames: music.frames });
                }
                let mut o: Vec<f64> = music.row(frame).iter().map(|&v| v as f64).collect();
                o.extend(state.vector());
                o
            }
        };
        let (out, _) = policy.forward(&obs, 1)?;
        Ok(if deterministic { policy.mode(out.row(0)).0 } else { policy.sample(out.row(0), &out.log_std, &mut rng).0 })
    };
    let scorer = task.map(|t| t as &dyn DanceTask);
    play_track(env, music, name, 0, seed, controller, scorer, render).map_err(CliError::classify)
}

fn eval(cfg: &RunConfig, trajectory: &Path, audio: &Path, json: Option<&Path>, csv: Option<&Path>) -> Result<()> {
    let traj = read_traj(trajectory).map_err(CliError::classify)?;
    let music = load_music(audio)?;
    let report = evaluate_trajectory(&traj, &music, &cfg.metrics.kinematic, cfg.metrics.sigma).map_err(CliError::classify)?;
    if let Some(p) = json {
        write_file(p, report.to_json() + "\n")?;
    }
    if let Some(p) = csv {
        write_file(p, report.to_csv())?;
    }
    println!("{}", report.table());
    Ok(())
}
