//! Kinematic footstep walker.
//!
//! One decision per footstep: the policy chooses where the swing foot lands
//! (relative to its nominal stance position in the base frame) and how much
//! the heading turns. The base is the midpoint of the feet, so its realized
//! velocity is the stance-midpoint displacement divided by the step duration.
//!
//! In [`DynamicsMode::Soft`] the walker stands on the gap-filled flat twin
//! while perceiving, and being scored against, the task terrain. In
//! [`DynamicsMode::Hard`] it stands on the task terrain and a misstep ends the
//! episode.

mod eval;
mod reward;

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::foothold::{self, FootPrint, FootState, FootholdConfig, Touchdown};
use crate::geom::{wrap_angle, Pose2};
use crate::sensor::{self, MapNoiseConfig, NoiseEvents, SensorState, MAP_LEN};
use crate::terrain::{Course, HeightField, TerrainPair, PLATFORM_LENGTH};

pub use crate::rl::MeanPolicy;
pub use eval::{evaluate, evaluate_episode, run_episode, Controller, EpisodeRecord, EvalMetrics, StandStill, StoneStepper};
pub use reward::{DenseComponents, DenseWeights, RewardGroups};

pub const ACT_DIM: usize = 3;
pub const CMD_DIM: usize = 3;
pub const PROPRIO_DIM: usize = 8;
pub const OBS_DIM: usize = CMD_DIM + PROPRIO_DIM + MAP_LEN + ACT_DIM;
pub const MAX_STEP_OFFSET: f64 = 0.6;
pub const MAX_TURN: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("step called on a finished episode")]
    EpisodeFinished,
    #[error("step called before reset")]
    NotReset,
    #[error("non-finite action component {0}")]
    NonFiniteAction(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    One,
    Two,
}

impl Stage {
    pub fn number(self) -> u8 {
        match self {
            Stage::One => 1,
            Stage::Two => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Command {
    pub vx: f64,
    pub vy: f64,
    pub wyaw: f64,
}

/// Draws a velocity command from the stage's sampling ranges.
pub fn sample_command(stage: Stage, rng: &mut impl Rng) -> Command {
    match stage {
        Stage::One => Command {
            vx: rng.gen_range(-1.0..=1.0),
            vy: rng.gen_range(-1.0..=1.0),
            wyaw: rng.gen_range(-1.0..=1.0),
        },
        Stage::Two => Command {
            vx: rng.gen_range(-1.0..=1.0),
            vy: 0.0,
            wyaw: 0.0,
        },
    }
}

/// Landing offset of the swing foot and heading change, clamped on entry.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Action {
    pub dx: f64,
    pub dy: f64,
    pub dyaw: f64,
}

impl Action {
    pub fn new(dx: f64, dy: f64, dyaw: f64) -> Result<Self, EnvError> {
        for (i, v) in [dx, dy, dyaw].into_iter().enumerate() {
            if !v.is_finite() {
                return Err(EnvError::NonFiniteAction(i));
            }
        }
        Ok(Self {
            dx: dx.clamp(-MAX_STEP_OFFSET, MAX_STEP_OFFSET),
            dy: dy.clamp(-MAX_STEP_OFFSET, MAX_STEP_OFFSET),
            dyaw: dyaw.clamp(-MAX_TURN, MAX_TURN),
        })
    }

    /// Scales a raw policy output into physical units.
    pub fn from_policy(raw: &[f64], scale: [f64; ACT_DIM]) -> Result<Self, EnvError> {
        Self::new(raw[0] * scale[0], raw[1] * scale[1], raw[2] * scale[2])
    }

    pub fn as_array(&self) -> [f64; ACT_DIM] {
        [self.dx, self.dy, self.dyaw]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DynamicsMode {
    Soft,
    Hard,
}

/// Flat observation vector: command, proprioception, percept, last action.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Observation(Vec<f64>);

impl Observation {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn command(&self) -> &[f64] {
        &self.0[..CMD_DIM]
    }

    /// Base velocity (2), heading sin/cos (2), swing then stance foot in the base frame (4).
    pub fn proprio(&self) -> &[f64] {
        &self.0[CMD_DIM..CMD_DIM + PROPRIO_DIM]
    }

    /// Elevation map relative to the base height, row-major with +x along rows.
    pub fn percept(&self) -> &[f64] {
        &self.0[CMD_DIM + PROPRIO_DIM..CMD_DIM + PROPRIO_DIM + MAP_LEN]
    }

    pub fn last_action(&self) -> &[f64] {
        &self.0[OBS_DIM - ACT_DIM..]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub step_duration: f64,
    pub max_steps: usize,
    pub stance_width: f64,
    /// Leg reach past the nominal half stance, outward from the body.
    pub max_outward: f64,
    pub action_scale: [f64; ACT_DIM],
    pub weights: DenseWeights,
    pub foothold: FootholdConfig,
    pub footprint: FootPrint,
    pub noise: MapNoiseConfig,
    /// Replace the yaw-rate command by a proportional heading correction.
    pub heading_command: bool,
    pub heading_gain: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            step_duration: 0.7,
            max_steps: 60,
            stance_width: 0.24,
            max_outward: 0.12,
            action_scale: [0.2, 0.1, 0.1],
            weights: DenseWeights::default(),
            foothold: FootholdConfig::default(),
            footprint: FootPrint::default(),
            noise: MapNoiseConfig::default(),
            heading_command: false,
            heading_gain: 1.0,
        }
    }
}

impl EnvConfig {
    /// Lateral landing coordinate in the heading frame of the swing foot on
    /// `side` (+1 left, -1 right), limited by the outward reach.
    pub fn swing_lateral(&self, side: f64, dy: f64) -> f64 {
        let half = 0.5 * self.stance_width;
        side * (half + side * dy).min(half + self.max_outward)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    Misstep,
    OutOfBounds,
    Collision,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    pub success: bool,
    pub termination: Option<Termination>,
    pub timeout: bool,
    /// World-frame base velocity realized over the step.
    pub realized_velocity: (f64, f64),
    pub yaw_rate: f64,
    pub progress: f64,
    pub traverse_rate: f64,
    pub touchdown: Touchdown,
    /// Support of the landing foot on the terrain it stands on.
    pub support_fraction: f64,
    pub noise: NoiseEvents,
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward: RewardGroups,
    pub done: bool,
    pub info: StepInfo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WalkerState {
    pub base: Pose2,
    pub base_velocity: (f64, f64),
    /// Index 0 is the left foot, 1 the right foot.
    pub feet: [FootState; 2],
    pub swing_index: usize,
    pub step_clock: f64,
    /// Previous action first, the one before it second.
    pub prev_actions: [Action; 2],
}

#[derive(Debug, Clone, Copy)]
struct CourseFrame {
    direction: f64,
    origin: f64,
    length: f64,
}

#[derive(Debug, Clone)]
pub struct WalkerEnv {
    cfg: EnvConfig,
    pair: Option<Arc<TerrainPair>>,
    mode: DynamicsMode,
    command: Command,
    state: WalkerState,
    sensor: SensorState,
    course: Option<CourseFrame>,
    steps: usize,
    max_progress: f64,
    done: bool,
}

impl WalkerEnv {
    pub fn new(cfg: EnvConfig) -> Self {
        Self {
            cfg,
            pair: None,
            mode: DynamicsMode::Soft,
            command: Command::default(),
            state: WalkerState {
                base: Pose2::default(),
                base_velocity: (0.0, 0.0),
                feet: [FootState::default(); 2],
                swing_index: 0,
                step_clock: 0.0,
                prev_actions: [Action::default(); 2],
            },
            sensor: SensorState::default(),
            course: None,
            steps: 0,
            max_progress: 0.0,
            done: true,
        }
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn state(&self) -> &WalkerState {
        &self.state
    }

    pub fn pair(&self) -> Option<&Arc<TerrainPair>> {
        self.pair.as_ref()
    }

    pub fn mode(&self) -> DynamicsMode {
        self.mode
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// +1 or -1 along a strip course, 0 on an open field.
    pub fn course_direction(&self) -> f64 {
        self.course.map_or(0.0, |c| c.direction)
    }

    pub fn command(&self) -> Command {
        self.command
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Command as seen by the policy, including the heading correction when enabled.
    pub fn effective_command(&self) -> Command {
        let mut c = self.command;
        if self.cfg.heading_command {
            c.wyaw = self.cfg.heading_gain * wrap_angle(-self.state.base.yaw);
        }
        c
    }

    pub fn reset(
        &mut self,
        pair: Arc<TerrainPair>,
        mode: DynamicsMode,
        command: Command,
        rng: &mut impl Rng,
    ) -> Observation {
        let (spawn, course) = match pair.layout.course {
            Course::Strip { start, end, center_y } => {
                if command.vx >= 0.0 {
                    let frame = CourseFrame { direction: 1.0, origin: start, length: end - start };
                    (Pose2::new(start - 0.5 * PLATFORM_LENGTH, center_y, 0.0), frame)
                } else {
                    let frame = CourseFrame { direction: -1.0, origin: end, length: end - start };
                    (Pose2::new(end + 0.5 * PLATFORM_LENGTH, center_y, 0.0), frame)
                }
            }
            Course::Field { center_x, center_y, goal_radius } => (
                Pose2::new(center_x, center_y, 0.0),
                CourseFrame { direction: 0.0, origin: 0.0, length: goal_radius },
            ),
        };
        let half = 0.5 * self.cfg.stance_width;
        let foot = |lateral: f64| {
            let (x, y) = spawn.to_world(0.0, lateral);
            FootState { pose: Pose2::new(x, y, spawn.yaw), contact: true, air_time: 0.0 }
        };
        self.state = WalkerState {
            base: spawn,
            base_velocity: (0.0, 0.0),
            feet: [foot(half), foot(-half)],
            swing_index: 0,
            step_clock: 0.0,
            prev_actions: [Action::default(); 2],
        };
        self.pair = Some(pair);
        self.mode = mode;
        self.command = command;
        self.course = Some(course);
        self.sensor = SensorState::reset(&self.cfg.noise, rng);
        self.steps = 0;
        self.max_progress = 0.0;
        self.done = false;
        self.observe(rng).0
    }

    fn progress(&self) -> f64 {
        let c = self.course.expect("reset before use");
        let b = self.state.base;
        match self.pair.as_ref().map(|p| p.layout.course) {
            Some(Course::Field { center_x, center_y, .. }) => (b.x - center_x).hypot(b.y - center_y),
            _ => c.direction * (b.x - c.origin),
        }
    }

    /// Height the foot rests on: the highest sole sample on `field`.
    fn foot_height(&self, foot: &FootState, field: &HeightField) -> f64 {
        self.cfg
            .footprint
            .offsets()
            .iter()
            .map(|&(fx, fy)| {
                let (wx, wy) = foot.pose.to_world(fx, fy);
                field.height_at(wx, wy).height
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn observe(&mut self, rng: &mut impl Rng) -> (Observation, NoiseEvents) {
        let pair = Arc::clone(self.pair.as_ref().expect("reset before use"));
        let walking = match self.mode {
            DynamicsMode::Soft => &pair.flat,
            DynamicsMode::Hard => &pair.task,
        };
        let base_height = 0.5
            * (self.foot_height(&self.state.feet[0], walking) + self.foot_height(&self.state.feet[1], walking));
        let clean = sensor::sample_map(&pair.task, self.state.base);
        let (map, events) = sensor::apply_noise(&clean, &pair.task, &mut self.sensor, &self.cfg.noise, rng);

        let cmd = self.effective_command();
        let s = &self.state;
        let swing = s.feet[s.swing_index].pose;
        let stance = s.feet[1 - s.swing_index].pose;
        let (swx, swy) = s.base.to_local(swing.x, swing.y);
        let (stx, sty) = s.base.to_local(stance.x, stance.y);
        let (sin, cos) = s.base.yaw.sin_cos();

        let mut v = Vec::with_capacity(OBS_DIM);
        v.extend_from_slice(&[cmd.vx, cmd.vy, cmd.wyaw]);
        v.extend_from_slice(&[s.base_velocity.0, s.base_velocity.1, sin, cos, swx, swy, stx, sty]);
        v.extend(map.samples().iter().map(|h| h - base_height));
        v.extend_from_slice(&s.prev_actions[0].as_array());
        debug_assert_eq!(v.len(), OBS_DIM);
        (Observation(v), events)
    }

    pub fn step(&mut self, action: Action, rng: &mut impl Rng) -> Result<StepOutcome, EnvError> {
        if self.pair.is_none() {
            return Err(EnvError::NotReset);
        }
        if self.done {
            return Err(EnvError::EpisodeFinished);
        }
        let dt = self.cfg.step_duration;
        let command = self.effective_command();
        let old_base = self.state.base;
        let yaw = old_base.yaw + action.dyaw;
        let swing = self.state.swing_index;
        let side = if swing == 0 { 1.0 } else { -1.0 };
        let heading = Pose2::new(old_base.x, old_base.y, yaw);
        let (tx, ty) = heading.to_world(action.dx, self.cfg.swing_lateral(side, action.dy));

        let air_time = self.state.feet[swing].air_time + dt;
        self.state.feet[swing] = FootState { pose: Pose2::new(tx, ty, yaw), contact: true, air_time: 0.0 };
        let [left, right] = self.state.feet;
        let base = Pose2::new(0.5 * (left.pose.x + right.pose.x), 0.5 * (left.pose.y + right.pose.y), yaw);
        let velocity = ((base.x - old_base.x) / dt, (base.y - old_base.y) / dt);
        let yaw_rate = action.dyaw / dt;
        self.state.base = base;
        self.state.base_velocity = velocity;
        self.state.step_clock += dt;

        let pair = Arc::clone(self.pair.as_ref().expect("checked above"));
        let landing = self.state.feet[swing];
        let print = &self.cfg.footprint;
        let eps = self.cfg.foothold.epsilon;
        let bad = foothold::bad_sample_count(&landing, print, &pair.task, eps);
        let mut touching = self.state.feet;
        touching[1 - swing].contact = false;
        let sparse = foothold::foothold_reward(&touching, print, &pair.task, &self.cfg.foothold);

        let (_, lly) = base.to_local(left.pose.x, left.pose.y);
        let (_, rly) = base.to_local(right.pose.x, right.pose.y);
        let lateral_separation = lly - rly;
        let a = action.as_array();
        let a1 = self.state.prev_actions[0].as_array();
        let a2 = self.state.prev_actions[1].as_array();
        let components = reward::dense_components(
            &self.cfg.weights,
            command,
            velocity,
            yaw_rate,
            (a, a1, a2),
            lateral_separation.abs(),
            air_time,
            (base.x - old_base.x, base.y - old_base.y),
        );
        let reward = RewardGroups::new(components, &self.cfg.weights, sparse);
        self.state.prev_actions = [action, self.state.prev_actions[0]];
        self.state.swing_index = 1 - swing;
        self.steps += 1;

        let walking = match self.mode {
            DynamicsMode::Soft => &pair.flat,
            DynamicsMode::Hard => &pair.task,
        };
        let support = foothold::support_fraction(&landing, print, walking, eps);
        let threshold = self.cfg.foothold.support_threshold;
        let progress = self.progress();
        self.max_progress = self.max_progress.max(progress);
        let course = self.course.expect("reset before use");

        let termination = if !walking.contains(base.x, base.y) {
            Some(Termination::OutOfBounds)
        } else if lateral_separation < 0.5 * self.cfg.weights.min_feet_distance {
            Some(Termination::Collision)
        } else if self.mode == DynamicsMode::Hard && support < threshold {
            Some(Termination::Misstep)
        } else {
            None
        };
        let success = termination.is_none()
            && progress >= course.length
            && self
                .state
                .feet
                .iter()
                .all(|f| foothold::support_fraction(f, print, walking, eps) >= threshold);
        let timeout = termination.is_none() && !success && self.steps >= self.cfg.max_steps;
        self.done = termination.is_some() || success || timeout;

        let n = print.n();
        let (observation, noise) = self.observe(rng);
        let traverse_rate = (self.max_progress / course.length).clamp(0.0, 1.0);
        Ok(StepOutcome {
            observation,
            reward,
            done: self.done,
            info: StepInfo {
                success,
                termination,
                timeout,
                realized_velocity: velocity,
                yaw_rate,
                progress,
                traverse_rate,
                touchdown: Touchdown { bad, n },
                support_fraction: support,
                noise,
            },
        })
    }
}
