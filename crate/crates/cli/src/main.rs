//! `rhythmotion`: analyse music, synthesise paired datasets, train the
//! reward model and dancers, render dances and score them.

mod commands;
mod config;
mod gif_out;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicU8, Ordering};

use clap::{Args, Parser, Subcommand};

use config::knobs_help;

static VERBOSITY: AtomicU8 = AtomicU8::new(1);

/// Progress message on stderr, shown at verbosity `level` or above.
pub fn log(level: u8, msg: impl fmt::Display) {
    if VERBOSITY.load(Ordering::Relaxed) >= level {
        eprintln!("{msg}");
    }
}

#[derive(Debug)]
pub enum CliError {
    /// Bad input file, argument or configuration (exit 2).
    Input(String),
    /// Failure while computing (exit 3).
    Runtime(String),
}

impl CliError {
    pub fn input(e: impl fmt::Display) -> Self {
        CliError::Input(e.to_string())
    }

    pub fn runtime(e: impl fmt::Display) -> Self {
        CliError::Runtime(e.to_string())
    }

    /// Input error when the library classifies it as one, runtime otherwise.
    pub fn classify(e: impl Into<rhythmotion::Error>) -> Self {
        let e = e.into();
        if e.is_input_error() {
            CliError::Input(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "input error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "rhythmotion", version, about = "Teach simulated agents to dance to music")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML configuration file; unknown keys are rejected.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override one configuration key, e.g. `--set ppo.lr=3e-4`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Run seed [default: config, then $RHYTHMOTION_SEED, then 0].
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for dataset building and rollouts; 1 is bit-reproducible [default: 1].
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// More progress output.
    #[arg(short, long, global = true, conflicts_with = "quiet")]
    pub verbose: bool,
    /// Errors only.
    #[arg(short, long, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract the per-frame music feature track (.mft) from a WAV file.
    #[command(after_help = knobs_help())]
    Analyze {
        audio: PathBuf,
        #[arg(short, long, value_name = "MFT")]
        out: PathBuf,
    },
    /// Build a paired music/flow dataset from WAV files or generated tones.
    #[command(after_help = knobs_help())]
    SynthData {
        /// Directory of .wav files (ignored with --generate-tones).
        #[arg(required_unless_present = "generate_tones")]
        audio_dir: Option<PathBuf>,
        /// Synthesise N click/tone tracks with seeded tempi instead of reading audio.
        #[arg(long, value_name = "N")]
        generate_tones: Option<usize>,
        /// Length of each generated track in seconds [default: synth.tone_secs].
        #[arg(long)]
        tone_secs: Option<f64>,
        #[arg(short, long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Train the contrastive reward model on a dataset.
    #[command(after_help = knobs_help())]
    TrainReward {
        dataset: PathBuf,
        /// Checkpoint of the epoch with the lowest validation loss.
        #[arg(short, long, value_name = "CKPT")]
        out: PathBuf,
        /// Per-epoch log [default: checkpoint path with a .csv extension].
        #[arg(long, value_name = "CSV")]
        log: Option<PathBuf>,
        /// [default: reward.epochs]
        #[arg(long)]
        epochs: Option<usize>,
        /// Train on randomly re-paired music and flow (control run).
        #[arg(long)]
        shuffle_pairs: bool,
    },
    /// Train a dancer with PPO, or write the BPM-control baseline.
    #[command(after_help = knobs_help())]
    #[command(group(clap::ArgGroup::new("reward").required(true).args(["reward_ckpt", "no_rm", "bpm"])))]
    TrainDancer {
        #[arg(long, value_parser = ["cartpole", "arm"])]
        agent: String,
        /// Reward-model checkpoint to train against.
        #[arg(long, value_name = "CKPT")]
        reward_ckpt: Option<PathBuf>,
        /// Reward-model-free baseline: negative L1 distance to the reference dancer's flow.
        #[arg(long)]
        no_rm: bool,
        /// BPM-based control baseline (arm only); nothing is trained.
        #[arg(long)]
        bpm: bool,
        /// Dataset directory whose training tracks drive the episodes.
        #[arg(long, required_unless_present = "bpm")]
        dataset: Option<PathBuf>,
        #[arg(short, long, value_name = "POLICY")]
        out: PathBuf,
        /// Learning curve [default: policy path with a .csv extension].
        #[arg(long, value_name = "CSV")]
        curve: Option<PathBuf>,
        /// [default: ppo.total_steps]
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Run a policy over a track and write its trajectory and frames.
    #[command(after_help = knobs_help())]
    Dance {
        policy: PathBuf,
        /// WAV file or .mft feature track.
        audio: PathBuf,
        #[arg(short, long, value_name = "DIR")]
        out: PathBuf,
        /// Reward model for observations (required by policies trained against one) and scoring.
        #[arg(long, value_name = "CKPT")]
        reward_ckpt: Option<PathBuf>,
        /// Sample actions instead of taking the most likely one.
        #[arg(long)]
        sample: bool,
        /// Also write dance.gif.
        #[arg(long)]
        gif: bool,
        /// Pixel scale of the GIF.
        #[arg(long, default_value_t = 4)]
        gif_scale: usize,
        /// Skip the per-frame PGM files.
        #[arg(long)]
        no_frames: bool,
    },
    /// Score a trajectory against its music (BeatAlign and F1@note).
    #[command(after_help = knobs_help())]
    Eval {
        trajectory: PathBuf,
        /// WAV file or .mft feature track.
        audio: PathBuf,
        #[arg(long, value_name = "PATH")]
        json: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        csv: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
