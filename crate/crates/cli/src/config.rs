use std::path::Path;

use rhythmotion::choreo::DatasetConfig;
use rhythmotion::env::{AgentKind, ArmParams, CartPoleParams, EnvConfig};
use rhythmotion::metrics::KinematicBeatConfig;
use rhythmotion::reward::RewardTrainConfig;
use rhythmotion::rl::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SEED_ENV: &str = "RHYTHMOTION_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSection {
    /// Length of each generated tone track in seconds.
    pub tone_secs: f64,
    pub sample_rate: u32,
}

impl Default for SynthSection {
    fn default() -> Self {
        Self { tone_secs: 60.0, sample_rate: 22050 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvSection {
    pub resolution: usize,
    pub episode_cap: usize,
    pub cartpole: CartPoleParams,
    pub arm: ArmParams,
}

impl Default for EnvSection {
    fn default() -> Self {
        let e = EnvConfig::new(AgentKind::CartPole);
        Self { resolution: e.resolution, episode_cap: e.episode_cap, cartpole: e.cartpole, arm: e.arm }
    }
}

impl EnvSection {
    pub fn env_config(&self, kind: AgentKind, half_window: usize) -> EnvConfig {
        EnvConfig { kind, resolution: self.resolution, episode_cap: self.episode_cap, half_window, cartpole: self.cartpole, arm: self.arm }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsSection {
    /// BeatAlign kernel width in frames.
    pub sigma: f64,
    pub kinematic: KinematicBeatConfig,
}

impl Default for MetricsSection {
    fn default() -> Self {
        Self { sigma: 3.0, kinematic: KinematicBeatConfig::default() }
    }
}

/// Every knob of a run. The run seed replaces the `seed` field of each
/// section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub workers: usize,
    /// 0 quiet, 1 progress, 2 per-iteration detail.
    pub verbosity: u8,
    pub synth: SynthSection,
    pub dataset: DatasetConfig,
    pub reward: RewardTrainConfig,
    pub ppo: TrainConfig,
    pub env: EnvSection,
    pub metrics: MetricsSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            workers: 1,
            verbosity: 1,
            synth: SynthSection::default(),
            dataset: DatasetConfig::default(),
            reward: RewardTrainConfig::default(),
            ppo: TrainConfig::default(),
            env: EnvSection::default(),
            metrics: MetricsSection::default(),
        }
    }
}

/// Text appended to every subcommand's help: all knobs with their defaults.
pub fn knobs_help() -> String {
    let defaults = toml::to_string(&RunConfig::default()).unwrap_or_default();
    format!(
        "Configuration knobs and defaults. Set them in a TOML file passed with --config or \
         with --set section.key=value; command-line flags win over both.\n\n{defaults}"
    )
}

fn parse_value(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), CliError> {
    let (key, value) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Input(format!("--set expects key=value, got {assignment:?}")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Input(format!("invalid key {key:?}")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| CliError::Input(format!("{key:?}: {p} is not a section")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), parse_value(value.trim()));
    Ok(())
}

/// Builds the configuration from an optional file plus `--set` overrides.
/// The second value tells whether the seed was given explicitly.
pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<(RunConfig, bool), CliError> {
    let mut table = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?;
            toml::from_str::<toml::Table>(&text).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?
        }
        None => toml::Table::new(),
    };
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    let has_seed = table.contains_key("seed");
    let cfg = RunConfig::deserialize(toml::Value::Table(table)).map_err(|e| CliError::Input(format!("config: {e}")))?;
    Ok((cfg, has_seed))
}

/// Seed precedence: flag, configuration, environment variable, zero.
pub fn resolve_seed(flag: Option<u64>, cfg: &RunConfig, from_config: bool) -> Result<u64, CliError> {
    if let Some(s) = flag {
        return Ok(s);
    }
    if from_config {
        return Ok(cfg.seed);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().map_err(|_| CliError::Input(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(0),
    }
}

impl RunConfig {
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.dataset.seed = seed;
        self.reward.seed = seed;
        self.ppo.seed = seed;
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Input(m));
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        if !(self.synth.tone_secs > 0.0 && self.synth.tone_secs.is_finite()) || self.synth.sample_rate == 0 {
            return bad("synth.tone_secs and synth.sample_rate must be positive".into());
        }
        let d = &self.dataset;
        if d.stride == 0 || d.half_window == 0 || d.resolution < 8 {
            return bad("dataset.stride and dataset.half_window must be positive and dataset.resolution at least 8".into());
        }
        if !(d.val_fraction > 0.0 && d.val_fraction < 1.0) {
            return bad(format!("dataset.val_fraction must lie in (0, 1), got {}", d.val_fraction));
        }
        self.reward.validate().map_err(|e| CliError::Input(format!("reward: {e}")))?;
        if self.reward.model.half_window != d.half_window {
            return bad(format!(
                "reward.model.half_window {} differs from dataset.half_window {}",
                self.reward.model.half_window, d.half_window
            ));
        }
        self.ppo.validate().map_err(|e| CliError::Input(format!("ppo: {e}")))?;
        if self.env.resolution < 8 || self.env.episode_cap == 0 {
            return bad("env.resolution must be at least 8 and env.episode_cap positive".into());
        }
        if !(self.metrics.sigma > 0.0 && self.metrics.sigma.is_finite()) {
            return bad(format!("metrics.sigma must be positive, got {}", self.metrics.sigma));
        }
        Ok(())
    }
}
