//! Flat `key = value` run configuration.
//!
//! Lines are `key = value`, `# comment` or `include = <path>`; included files
//! are read in place, relative to the including file. Later assignments win.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::{AblationConfig, Cell, HarnessError};
use crate::env::{DynamicsMode, EnvConfig, Stage, ACT_DIM};
use crate::foothold::FootholdMode;
use crate::rl::{AdvantageNorm, CriticMode, PpoConfig, ValueTarget};
use crate::sensor::MapNoiseConfig;
use crate::terrain::{TerrainKind, MAX_LEVEL};

const MAX_INCLUDE_DEPTH: usize = 16;

/// Evaluation campaign settings.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub episodes: usize,
    pub seeds: Vec<u64>,
    pub kinds: Vec<TerrainKind>,
    pub levels: Vec<u8>,
    pub command_vx: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            episodes: 100,
            seeds: vec![0, 1, 2],
            kinds: vec![
                TerrainKind::SteppingStones,
                TerrainKind::BalancingBeams,
                TerrainKind::SteppingBeams,
                TerrainKind::Gaps,
            ],
            levels: vec![6, 8],
            command_vx: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub stage: Stage,
    pub seed: u64,
    pub iterations: usize,
    /// Training terrains; empty means the stage default.
    pub terrain_kinds: Vec<TerrainKind>,
    /// Half-width of the uniform terrain height noise.
    pub terrain_noise: f64,
    pub curriculum: bool,
    pub start_level: u8,
    pub max_level: u8,
    /// Level of every environment when the curriculum is off.
    pub fixed_level: u8,
    /// Walking dynamics; `None` means soft in stage 1 and hard in stage 2.
    pub dynamics: Option<DynamicsMode>,
    pub critic: CriticMode,
    pub hidden: Vec<usize>,
    pub ppo: PpoConfig,
    /// `ppo.gamma` and `ppo.lam` are given per control tick of this length
    /// and compounded over each footstep.
    pub tick_duration: f64,
    pub env: EnvConfig,
    pub noise_enabled: bool,
    /// Stage-1 checkpoint that stage 2 starts from.
    pub init: Option<PathBuf>,
    /// Lets stage 2 start from a random policy.
    pub from_scratch: bool,
    pub checkpoint_every: usize,
    pub eval: EvalConfig,
    pub ablation: AblationConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            stage: Stage::One,
            seed: 0,
            iterations: 10_000,
            terrain_kinds: Vec::new(),
            terrain_noise: 0.02,
            curriculum: true,
            start_level: 0,
            max_level: MAX_LEVEL,
            fixed_level: 6,
            dynamics: None,
            critic: CriticMode::Double,
            hidden: vec![64, 64],
            ppo: PpoConfig::default(),
            tick_duration: 0.02,
            env: EnvConfig::default(),
            noise_enabled: true,
            init: None,
            from_scratch: false,
            checkpoint_every: 500,
            eval: EvalConfig::default(),
            ablation: AblationConfig::default(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, HarnessError> {
    value
        .parse()
        .map_err(|_| HarnessError::Config(format!("`{key}`: cannot parse `{value}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, HarnessError> {
    match value {
        "true" | "on" | "1" => Ok(true),
        "false" | "off" | "0" => Ok(false),
        _ => Err(HarnessError::Config(format!("`{key}`: expected a boolean, got `{value}`"))),
    }
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, HarnessError> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn parse_kind(key: &str, value: &str) -> Result<TerrainKind, HarnessError> {
    value.parse().map_err(|e| HarnessError::Config(format!("`{key}`: {e}")))
}

fn parse_kinds(key: &str, value: &str) -> Result<Vec<TerrainKind>, HarnessError> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_kind(key, s))
        .collect()
}

pub fn parse_foothold_mode(value: &str) -> Result<FootholdMode, HarnessError> {
    if value == "continuous" {
        return Ok(FootholdMode::Continuous);
    }
    value
        .strip_prefix("binary:")
        .and_then(|p| p.parse().ok())
        .map(FootholdMode::BinaryPct)
        .ok_or_else(|| HarnessError::Config(format!("foothold mode `{value}`: expected continuous or binary:<pct>")))
}

pub fn foothold_mode_name(mode: FootholdMode) -> String {
    match mode {
        FootholdMode::Continuous => "continuous".into(),
        FootholdMode::BinaryPct(p) => format!("binary:{p}"),
    }
}

impl RunConfig {
    /// Reads `path`, follows includes, then applies `overrides` (`key=value`).
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, HarnessError> {
        let mut cfg = Self::default();
        if let Some(p) = path {
            cfg.apply_file(p, 0)?;
        }
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| HarnessError::Config(format!("override `{o}` is not key=value")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }

    fn apply_file(&mut self, path: &Path, depth: usize) -> Result<(), HarnessError> {
        if depth > MAX_INCLUDE_DEPTH {
            return Err(HarnessError::Config(format!("include nesting too deep at {}", path.display())));
        }
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let dir = path.parent().unwrap_or_else(|| Path::new("."));
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                HarnessError::Config(format!("{}:{}: expected key = value", path.display(), n + 1))
            })?;
            let (k, v) = (k.trim(), v.trim());
            if k == "include" {
                self.apply_file(&dir.join(v), depth + 1)?;
            } else {
                self.set(k, v)
                    .map_err(|e| HarnessError::Config(format!("{}:{}: {e}", path.display(), n + 1)))?;
            }
        }
        Ok(())
    }

    /// Parses text in the config format on top of the current values.
    pub fn apply_text(&mut self, text: &str) -> Result<(), HarnessError> {
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| HarnessError::Config(format!("expected key = value, got `{line}`")))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<(), HarnessError> {
        let p = &mut self.ppo;
        let n = &mut self.env.noise;
        match key {
            "stage" => {
                self.stage = match v {
                    "1" => Stage::One,
                    "2" => Stage::Two,
                    _ => return Err(HarnessError::Config(format!("stage must be 1 or 2, got `{v}`"))),
                }
            }
            "seed" => self.seed = parse(key, v)?,
            "iterations" => self.iterations = parse(key, v)?,
            "num_envs" => p.num_envs = parse(key, v)?,
            "steps_per_iter" => p.steps_per_iter = parse(key, v)?,
            "ppo.tick_duration" => self.tick_duration = parse(key, v)?,
            "terrain.kinds" => self.terrain_kinds = parse_kinds(key, v)?,
            "terrain.noise" => self.terrain_noise = parse(key, v)?,
            "curriculum.enabled" => self.curriculum = parse_bool(key, v)?,
            "curriculum.start_level" => self.start_level = parse(key, v)?,
            "curriculum.max_level" => self.max_level = parse(key, v)?,
            "curriculum.fixed_level" => self.fixed_level = parse(key, v)?,
            "dynamics" => {
                self.dynamics = match v {
                    "auto" => None,
                    "soft" => Some(DynamicsMode::Soft),
                    "hard" => Some(DynamicsMode::Hard),
                    _ => return Err(HarnessError::Config(format!("dynamics must be auto, soft or hard, got `{v}`"))),
                }
            }
            "critic" => {
                self.critic = match v {
                    "double" => CriticMode::Double,
                    "single" => CriticMode::Single,
                    _ => return Err(HarnessError::Config(format!("critic must be double or single, got `{v}`"))),
                }
            }
            "net.hidden" => self.hidden = parse_list(key, v)?,
            "ppo.gamma" => p.gamma = parse(key, v)?,
            "ppo.lam" => p.lam = parse(key, v)?,
            "ppo.clip" => p.clip = parse(key, v)?,
            "ppo.entropy_coef" => p.entropy_coef = parse(key, v)?,
            "ppo.desired_kl" => p.desired_kl = parse(key, v)?,
            "ppo.epochs" => p.epochs = parse(key, v)?,
            "ppo.minibatches" => p.minibatches = parse(key, v)?,
            "ppo.w1" => p.w1 = parse(key, v)?,
            "ppo.w2" => p.w2 = parse(key, v)?,
            "ppo.value_loss_coef" => p.value_loss_coef = parse(key, v)?,
            "ppo.lr" => p.lr = parse(key, v)?,
            "ppo.lr_min" => p.lr_min = parse(key, v)?,
            "ppo.lr_max" => p.lr_max = parse(key, v)?,
            "ppo.max_grad_norm" => p.max_grad_norm = parse(key, v)?,
            "ppo.value_target" => {
                p.value_target = match v {
                    "lambda" => ValueTarget::LambdaReturn,
                    "one_step" => ValueTarget::OneStep,
                    _ => return Err(HarnessError::Config(format!("value_target must be lambda or one_step, got `{v}`"))),
                }
            }
            "ppo.advantage_norm" => {
                p.advantage_norm = match v {
                    "iteration" => AdvantageNorm::Iteration,
                    "minibatch" => AdvantageNorm::Minibatch,
                    _ => {
                        return Err(HarnessError::Config(format!(
                            "advantage_norm must be iteration or minibatch, got `{v}`"
                        )))
                    }
                }
            }
            "foothold.mode" => self.env.foothold.mode = parse_foothold_mode(v)?,
            "foothold.epsilon" => self.env.foothold.epsilon = parse(key, v)?,
            "foothold.support_threshold" => self.env.foothold.support_threshold = parse(key, v)?,
            "noise.enabled" => self.noise_enabled = parse_bool(key, v)?,
            "noise.vertical_offset_range" => n.vertical_offset_range = parse(key, v)?,
            "noise.vertical_noise_range" => n.vertical_noise_range = parse(key, v)?,
            "noise.rp_bias_range" => n.rp_bias_range = parse(key, v)?,
            "noise.yaw_noise_range" => n.yaw_noise_range = parse(key, v)?,
            "noise.foothold_extension_prob" => n.foothold_extension_prob = parse(key, v)?,
            "noise.map_repeat_prob" => n.map_repeat_prob = parse(key, v)?,
            "env.step_duration" => self.env.step_duration = parse(key, v)?,
            "env.max_outward" => self.env.max_outward = parse(key, v)?,
            "env.max_steps" => self.env.max_steps = parse(key, v)?,
            "env.action_scale" => {
                let s: Vec<f64> = parse_list(key, v)?;
                self.env.action_scale = s
                    .try_into()
                    .map_err(|_| HarnessError::Config(format!("`{key}` needs {ACT_DIM} values")))?;
            }
            "heading.enabled" => self.env.heading_command = parse_bool(key, v)?,
            "heading.gain" => self.env.heading_gain = parse(key, v)?,
            "init" => self.init = if v.is_empty() || v == "none" { None } else { Some(PathBuf::from(v)) },
            "from_scratch" => self.from_scratch = parse_bool(key, v)?,
            "checkpoint_every" => self.checkpoint_every = parse(key, v)?,
            "eval.episodes" => self.eval.episodes = parse(key, v)?,
            "eval.seeds" => self.eval.seeds = parse_list(key, v)?,
            "eval.kinds" => self.eval.kinds = parse_kinds(key, v)?,
            "eval.levels" => self.eval.levels = parse_list(key, v)?,
            "eval.command_vx" => self.eval.command_vx = parse(key, v)?,
            "ablation.cells" => {
                self.ablation.cells = v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(str::parse).collect::<Result<Vec<Cell>, _>>()?
            }
            "ablation.seeds" => self.ablation.seeds = parse_list(key, v)?,
            "ablation.stage1_iterations" => self.ablation.stage1_iterations = parse(key, v)?,
            "ablation.stage2_iterations" => self.ablation.stage2_iterations = parse(key, v)?,
            "ablation.stage1_kinds" => self.ablation.stage1_kinds = parse_kinds(key, v)?,
            "ablation.stage2_kinds" => self.ablation.stage2_kinds = parse_kinds(key, v)?,
            _ => return Err(HarnessError::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Every key with its current value, in a form `apply_text` reads back.
    pub fn to_text(&self) -> String {
        let p = &self.ppo;
        let n = &self.env.noise;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("stage", self.stage.number().to_string());
        kv("seed", self.seed.to_string());
        kv("iterations", self.iterations.to_string());
        kv("num_envs", p.num_envs.to_string());
        kv("steps_per_iter", p.steps_per_iter.to_string());
        kv("ppo.tick_duration", self.tick_duration.to_string());
        kv("terrain.kinds", join(&self.terrain_kinds));
        kv("terrain.noise", self.terrain_noise.to_string());
        kv("curriculum.enabled", self.curriculum.to_string());
        kv("curriculum.start_level", self.start_level.to_string());
        kv("curriculum.max_level", self.max_level.to_string());
        kv("curriculum.fixed_level", self.fixed_level.to_string());
        let dynamics = match self.dynamics {
            None => "auto",
            Some(DynamicsMode::Soft) => "soft",
            Some(DynamicsMode::Hard) => "hard",
        };
        kv("dynamics", dynamics.into());
        let critic = match self.critic {
            CriticMode::Double => "double",
            CriticMode::Single => "single",
        };
        kv("critic", critic.into());
        kv("net.hidden", join(&self.hidden));
        kv("ppo.gamma", p.gamma.to_string());
        kv("ppo.lam", p.lam.to_string());
        kv("ppo.clip", p.clip.to_string());
        kv("ppo.entropy_coef", p.entropy_coef.to_string());
        kv("ppo.desired_kl", p.desired_kl.to_string());
        kv("ppo.epochs", p.epochs.to_string());
        kv("ppo.minibatches", p.minibatches.to_string());
        kv("ppo.w1", p.w1.to_string());
        kv("ppo.w2", p.w2.to_string());
        kv("ppo.value_loss_coef", p.value_loss_coef.to_string());
        kv("ppo.lr", p.lr.to_string());
        kv("ppo.lr_min", p.lr_min.to_string());
        kv("ppo.lr_max", p.lr_max.to_string());
        kv("ppo.max_grad_norm", p.max_grad_norm.to_string());
        let vt = match p.value_target {
            ValueTarget::LambdaReturn => "lambda",
            ValueTarget::OneStep => "one_step",
        };
        kv("ppo.value_target", vt.into());
        let an = match p.advantage_norm {
            AdvantageNorm::Iteration => "iteration",
            AdvantageNorm::Minibatch => "minibatch",
        };
        kv("ppo.advantage_norm", an.into());
        kv("foothold.mode", foothold_mode_name(self.env.foothold.mode));
        kv("foothold.epsilon", self.env.foothold.epsilon.to_string());
        kv("foothold.support_threshold", self.env.foothold.support_threshold.to_string());
        kv("noise.enabled", self.noise_enabled.to_string());
        kv("noise.vertical_offset_range", n.vertical_offset_range.to_string());
        kv("noise.vertical_noise_range", n.vertical_noise_range.to_string());
        kv("noise.rp_bias_range", n.rp_bias_range.to_string());
        kv("noise.yaw_noise_range", n.yaw_noise_range.to_string());
        kv("noise.foothold_extension_prob", n.foothold_extension_prob.to_string());
        kv("noise.map_repeat_prob", n.map_repeat_prob.to_string());
        kv("env.step_duration", self.env.step_duration.to_string());
        kv("env.max_outward", self.env.max_outward.to_string());
        kv("env.max_steps", self.env.max_steps.to_string());
        kv("env.action_scale", join(&self.env.action_scale));
        kv("heading.enabled", self.env.heading_command.to_string());
        kv("heading.gain", self.env.heading_gain.to_string());
        kv("init", self.init.as_ref().map_or("none".into(), |p| p.display().to_string()));
        kv("from_scratch", self.from_scratch.to_string());
        kv("checkpoint_every", self.checkpoint_every.to_string());
        kv("eval.episodes", self.eval.episodes.to_string());
        kv("eval.seeds", join(&self.eval.seeds));
        kv("eval.kinds", join(&self.eval.kinds));
        kv("eval.levels", join(&self.eval.levels));
        kv("eval.command_vx", self.eval.command_vx.to_string());
        let a = &self.ablation;
        kv("ablation.cells", join(&a.cells));
        kv("ablation.seeds", join(&a.seeds));
        kv("ablation.stage1_iterations", a.stage1_iterations.to_string());
        kv("ablation.stage2_iterations", a.stage2_iterations.to_string());
        kv("ablation.stage1_kinds", join(&a.stage1_kinds));
        kv("ablation.stage2_kinds", join(&a.stage2_kinds));
        s
    }

    pub fn kinds(&self) -> Vec<TerrainKind> {
        if !self.terrain_kinds.is_empty() {
            return self.terrain_kinds.clone();
        }
        match self.stage {
            Stage::One => vec![TerrainKind::StonesEverywhere],
            Stage::Two => vec![TerrainKind::SteppingStones, TerrainKind::BalancingBeams],
        }
    }

    pub fn dynamics_mode(&self) -> DynamicsMode {
        self.dynamics.unwrap_or(match self.stage {
            Stage::One => DynamicsMode::Soft,
            Stage::Two => DynamicsMode::Hard,
        })
    }

    /// Environment configuration with the noise switch applied.
    pub fn env_config(&self) -> EnvConfig {
        let mut e = self.env.clone();
        if !self.noise_enabled {
            e.noise = MapNoiseConfig::none();
        }
        e
    }

    /// PPO settings with `gamma` and `lam` compounded from ticks to footsteps.
    pub fn footstep_ppo(&self) -> PpoConfig {
        let ticks = self.env.step_duration / self.tick_duration;
        PpoConfig { gamma: self.ppo.gamma.powf(ticks), lam: self.ppo.lam.powf(ticks), ..self.ppo.clone() }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if !(self.tick_duration > 0.0 && self.tick_duration <= self.env.step_duration) {
            return bad("ppo.tick_duration must be positive and at most env.step_duration".into());
        }
        self.ppo.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        self.env.foothold.validate().map_err(HarnessError::Config)?;
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad(format!("net.hidden must list positive widths, got {:?}", self.hidden));
        }
        if self.start_level > MAX_LEVEL || self.max_level > MAX_LEVEL || self.fixed_level > MAX_LEVEL {
            return bad(format!("curriculum levels must lie in 0..={MAX_LEVEL}"));
        }
        if self.start_level > self.max_level {
            return bad("curriculum.start_level exceeds curriculum.max_level".into());
        }
        if !(self.terrain_noise >= 0.0) {
            return bad("terrain.noise must be non-negative".into());
        }
        if !(self.env.max_outward >= 0.0) {
            return bad("env.max_outward must be non-negative".into());
        }
        if self.env.max_steps == 0 || !(self.env.step_duration > 0.0) {
            return bad("env.max_steps and env.step_duration must be positive".into());
        }
        if self.stage == Stage::One && self.init.is_some() {
            return bad("stage 1 starts from scratch; remove `init`".into());
        }
        if self.stage == Stage::Two && self.init.is_none() && !self.from_scratch {
            return bad("stage 2 needs `init` (a stage-1 checkpoint) or `from_scratch = true`".into());
        }
        if self.checkpoint_every == 0 {
            return bad("checkpoint_every must be positive".into());
        }
        if self.eval.episodes == 0 || self.eval.seeds.is_empty() {
            return bad("eval needs at least one episode and one seed".into());
        }
        if self.eval.levels.iter().any(|&l| l > MAX_LEVEL) {
            return bad(format!("eval.levels must lie in 0..={MAX_LEVEL}"));
        }
        Ok(())
    }
}
