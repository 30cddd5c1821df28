//! Episode rollouts with fixed controllers and the success / traverse /
//! foothold-error metrics.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Action, Command, DynamicsMode, EnvConfig, Observation, Termination, WalkerEnv, MAX_STEP_OFFSET};
use crate::foothold::{self, FootState, FootholdError, Touchdown};
use crate::geom::Pose2;
use crate::rng::{self, Purpose};
use crate::terrain::{generate, TerrainError, TerrainPair, TerrainSpec};

/// Anything that picks the next footstep.
pub trait Controller {
    fn act(&mut self, obs: &Observation, env: &WalkerEnv) -> Action;
}

/// Keeps both feet where they are.
#[derive(Debug, Clone, Copy, Default)]
pub struct StandStill;

impl Controller for StandStill {
    fn act(&mut self, _obs: &Observation, _env: &WalkerEnv) -> Action {
        Action::default()
    }
}

/// Scripted stepper with full terrain knowledge: lands the swing foot on the
/// farthest supported spot along the course that still leaves the other foot
/// a supported follow-up step. Each bad sole sample costs `bad_sample_cost`
/// meters of progress, and landings below the misstep threshold are never chosen.
#[derive(Debug, Clone)]
pub struct StoneStepper {
    /// Candidate grid spacing for the landing offset.
    pub resolution: f64,
    /// Minimum signed lateral separation between the feet.
    pub min_separation: f64,
    pub bad_sample_cost: f64,
}

impl Default for StoneStepper {
    fn default() -> Self {
        Self { resolution: 0.02, min_separation: 0.12, bad_sample_cost: 0.1 }
    }
}

impl StoneStepper {
    fn candidates(&self, step: f64) -> Vec<f64> {
        let n = (MAX_STEP_OFFSET / step).round() as i32;
        (-n..=n).map(|k| k as f64 * step).collect()
    }

    /// World landing point for an offset from the swing foot's nominal spot.
    fn landing(base: Pose2, side: f64, cfg: &EnvConfig, dx: f64, dy: f64) -> (f64, f64) {
        base.to_world(dx, cfg.swing_lateral(side, dy))
    }

    /// Bad sample count of a landing, or `None` when it would be a misstep.
    fn landing_cost(env: &WalkerEnv, x: f64, y: f64, yaw: f64) -> Option<usize> {
        let pair = env.pair().expect("controller used after reset");
        let cfg = env.config();
        let foot = FootState { pose: Pose2::new(x, y, yaw), contact: true, air_time: 0.0 };
        let bad = foothold::bad_sample_count(&foot, &cfg.footprint, &pair.task, cfg.foothold.epsilon);
        let n = cfg.footprint.n();
        ((n - bad) as f64 / n as f64 >= cfg.foothold.support_threshold).then_some(bad)
    }

    /// Best forward-ranked placements for the swing foot standing at `stance`.
    fn ranked(
        &self,
        env: &WalkerEnv,
        base: Pose2,
        side: f64,
        stance: (f64, f64),
        step: f64,
        direction: (f64, f64),
    ) -> Vec<(f64, f64, f64, f64)> {
        let cfg = env.config();
        let grid = self.candidates(step);
        let lateral = (-base.yaw.sin(), base.yaw.cos());
        let mut out = Vec::new();
        for &dx in &grid {
            for &dy in &grid {
                let (x, y) = Self::landing(base, side, cfg, dx, dy);
                let sep = side * ((x - stance.0) * lateral.0 + (y - stance.1) * lateral.1);
                if sep < self.min_separation {
                    continue;
                }
                let Some(bad) = Self::landing_cost(env, x, y, base.yaw) else { continue };
                let score = x * direction.0 + y * direction.1 - 0.01 * dy.abs() - self.bad_sample_cost * bad as f64;
                out.push((score, dx, dy, x));
            }
        }
        out.sort_by(|a, b| b.0.total_cmp(&a.0));
        out
    }

    fn direction(env: &WalkerEnv) -> (f64, f64) {
        if env.course_direction() < 0.0 {
            (-1.0, 0.0)
        } else {
            (1.0, 0.0)
        }
    }
}

impl Controller for StoneStepper {
    fn act(&mut self, _obs: &Observation, env: &WalkerEnv) -> Action {
        let s = env.state();
        let swing = s.swing_index;
        let side = if swing == 0 { 1.0 } else { -1.0 };
        let stance = s.feet[1 - swing].pose;
        let direction = Self::direction(env);
        let cfg = env.config();
        let first = self.ranked(env, s.base, side, (stance.x, stance.y), self.resolution, direction);
        let progress_of = |x: f64, y: f64| x * direction.0 + y * direction.1;
        for &(_, dx, dy, _) in first.iter().take(64) {
            let (x, y) = Self::landing(s.base, side, cfg, dx, dy);
            let next_base = Pose2::new(0.5 * (x + stance.x), 0.5 * (y + stance.y), s.base.yaw);
            let next = self.ranked(env, next_base, -side, (x, y), 2.0 * self.resolution, direction);
            // the follow-up foot must be able to land at least level with this one
            if next.iter().any(|c| {
                let (nx, ny) = Self::landing(next_base, -side, cfg, c.1, c.2);
                progress_of(nx, ny) >= progress_of(x, y) - 1e-9
            }) {
                return Action::new(dx, dy, 0.0).expect("finite");
            }
        }
        match first.first() {
            Some(&(_, dx, dy, _)) => Action::new(dx, dy, 0.0).expect("finite"),
            None => Action::default(),
        }
    }
}

/// Outcome of one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub success: bool,
    pub termination: Option<Termination>,
    pub timeout: bool,
    pub steps: usize,
    pub traverse_rate: f64,
    pub touchdowns: Vec<Touchdown>,
    pub dense_return: f64,
    pub sparse_return: f64,
}

impl EpisodeRecord {
    pub fn bad_samples(&self) -> usize {
        self.touchdowns.iter().map(|t| t.bad).sum()
    }
}

/// Aggregated metrics over a set of episodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub episodes: usize,
    pub successes: usize,
    pub touchdowns: usize,
    pub bad_samples: usize,
    pub r_succ: f64,
    pub r_trav: f64,
    pub e_foot: f64,
}

impl EvalMetrics {
    pub fn from_records(records: &[EpisodeRecord]) -> Self {
        let episodes = records.len();
        let successes = records.iter().filter(|r| r.success).count();
        let log: Vec<Touchdown> = records.iter().flat_map(|r| r.touchdowns.iter().copied()).collect();
        let FootholdError { value, .. } = foothold::foothold_error(&log);
        let n = episodes.max(1) as f64;
        Self {
            episodes,
            successes,
            touchdowns: log.len(),
            bad_samples: log.iter().map(|t| t.bad).sum(),
            r_succ: successes as f64 / n,
            r_trav: records.iter().map(|r| r.traverse_rate).sum::<f64>() / n,
            e_foot: value,
        }
    }
}

/// Runs one episode to completion.
pub fn run_episode(
    env: &mut WalkerEnv,
    ctrl: &mut dyn Controller,
    pair: Arc<TerrainPair>,
    mode: DynamicsMode,
    command: Command,
    rng: &mut impl Rng,
) -> EpisodeRecord {
    let mut obs = env.reset(pair, mode, command, rng);
    let mut rec = EpisodeRecord {
        success: false,
        termination: None,
        timeout: false,
        steps: 0,
        traverse_rate: 0.0,
        touchdowns: Vec::new(),
        dense_return: 0.0,
        sparse_return: 0.0,
    };
    loop {
        let action = ctrl.act(&obs, env);
        let out = env.step(action, rng).expect("episode is active");
        rec.steps += 1;
        rec.touchdowns.push(out.info.touchdown);
        rec.dense_return += out.reward.dense;
        rec.sparse_return += out.reward.sparse;
        rec.traverse_rate = out.info.traverse_rate;
        obs = out.observation;
        if out.done {
            rec.success = out.info.success;
            rec.termination = out.info.termination;
            rec.timeout = out.info.timeout;
            return rec;
        }
    }
}

/// Episode `index` of an evaluation campaign on `spec`'s kind and level.
/// Terrain and noise depend only on `(spec, seed, index)`.
pub fn evaluate_episode(
    ctrl: &mut dyn Controller,
    spec: &TerrainSpec,
    cfg: &EnvConfig,
    command: Command,
    seed: u64,
    index: u64,
) -> Result<EpisodeRecord, TerrainError> {
    let mut s = spec.clone();
    s.seed = rng::mix(seed, index);
    let pair = Arc::new(generate(&s)?);
    let mut env = WalkerEnv::new(cfg.clone());
    let mut r = rng::stream(seed, Purpose::Eval, index);
    Ok(run_episode(&mut env, ctrl, pair, DynamicsMode::Hard, command, &mut r))
}

/// Hard-mode evaluation over `episodes` freshly generated terrains.
pub fn evaluate(
    ctrl: &mut dyn Controller,
    spec: &TerrainSpec,
    episodes: usize,
    cfg: &EnvConfig,
    command: Command,
    seed: u64,
) -> Result<(EvalMetrics, Vec<EpisodeRecord>), TerrainError> {
    let records = (0..episodes as u64)
        .map(|i| evaluate_episode(ctrl, spec, cfg, command, seed, i))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((EvalMetrics::from_records(&records), records))
}
