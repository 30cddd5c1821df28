//! Two-stage training driver: vectorized rollouts, curriculum bookkeeping,
//! PPO updates and artifact writing.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ndarray::Array2;
use rand::Rng;
use serde_json::json;

use super::{CurriculumState, HarnessError, RunConfig, TrainingCheckpoint};
use crate::env::{
    sample_command, Action, Command, DenseComponents, DynamicsMode, Observation, Stage, WalkerEnv, ACT_DIM, OBS_DIM,
};
use crate::nn;
use crate::rl::{Agent, EndKind, RlError, RolloutBuffer, Transition, UpdateStats};
use crate::rng::{self, Purpose, StreamRng};
use crate::terrain::{generate, TerrainKind, TerrainSpec, COURSE_LENGTH, FIELD_GOAL_RADIUS};

pub const TRAIN_CSV_VERSION: u32 = 1;

/// One row of `train.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainRow {
    pub iteration: u64,
    pub stage: u8,
    pub mean_level: f64,
    pub passed_all: usize,
    pub episodes: usize,
    pub successes: usize,
    pub mean_episode_dense: f64,
    pub mean_episode_sparse: f64,
    pub mean_step_dense: f64,
    pub mean_step_sparse: f64,
    /// Per-step means of the unweighted dense reward terms.
    pub components: [f64; DenseComponents::COUNT],
    pub touchdowns: usize,
    pub bad_samples: usize,
    pub sole_samples: usize,
    pub stats: UpdateStats,
}

impl TrainRow {
    pub fn header() -> Vec<String> {
        let mut h: Vec<String> = [
            "csv_version",
            "iteration",
            "stage",
            "mean_level",
            "passed_all",
            "episodes",
            "successes",
            "mean_episode_dense",
            "mean_episode_sparse",
            "mean_step_dense",
            "mean_step_sparse",
        ]
        .into_iter()
        .map(String::from)
        .collect();
        h.extend(DenseComponents::NAMES.iter().map(|n| format!("r_{n}")));
        h.extend(
            [
                "touchdowns",
                "bad_samples",
                "sole_samples",
                "mean_kl",
                "value_loss1",
                "value_loss2",
                "surrogate",
                "entropy",
                "policy_grad_norm",
                "critic1_grad_norm",
                "critic2_grad_norm",
                "lr",
                "dense_contribution",
                "sparse_contribution",
            ]
            .into_iter()
            .map(String::from),
        );
        h
    }

    pub fn record(&self) -> Vec<String> {
        let s = &self.stats;
        let mut r = vec![
            TRAIN_CSV_VERSION.to_string(),
            self.iteration.to_string(),
            self.stage.to_string(),
            self.mean_level.to_string(),
            self.passed_all.to_string(),
            self.episodes.to_string(),
            self.successes.to_string(),
            self.mean_episode_dense.to_string(),
            self.mean_episode_sparse.to_string(),
            self.mean_step_dense.to_string(),
            self.mean_step_sparse.to_string(),
        ];
        r.extend(self.components.iter().map(f64::to_string));
        r.extend([
            self.touchdowns.to_string(),
            self.bad_samples.to_string(),
            self.sole_samples.to_string(),
        ]);
        r.extend(
            [
                s.mean_kl,
                s.value_loss1,
                s.value_loss2,
                s.surrogate,
                s.entropy,
                s.policy_grad_norm,
                s.critic1_grad_norm,
                s.critic2_grad_norm,
                s.lr,
                s.dense_contribution,
                s.sparse_contribution,
            ]
            .iter()
            .map(f64::to_string),
        );
        r
    }
}

/// Result of a training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: TrainingCheckpoint,
    pub checkpoint_path: PathBuf,
    pub rows: Vec<TrainRow>,
}

/// Observer called after every iteration, for progress reporting.
pub type Progress<'a> = &'a mut dyn FnMut(&TrainRow);

struct Slot {
    env: WalkerEnv,
    rng: StreamRng,
    kind: TerrainKind,
    obs: Observation,
    command: Command,
    dense: f64,
    sparse: f64,
}

/// Whether a command is fast enough to finish the course before the time limit.
fn can_finish(kind: TerrainKind, command: Command, cfg: &RunConfig) -> bool {
    let horizon = cfg.env.max_steps as f64 * cfg.env.step_duration;
    let (speed, distance) = if kind.is_strip() {
        (command.vx.abs(), COURSE_LENGTH)
    } else {
        (command.vx.hypot(command.vy), FIELD_GOAL_RADIUS)
    };
    speed * horizon >= distance
}

struct Events {
    out: BufWriter<File>,
}

impl Events {
    fn create(path: &Path, append: bool) -> Result<Self, HarnessError> {
        let f = fs::OpenOptions::new().create(true).append(append).write(true).truncate(!append).open(path)?;
        Ok(Self { out: BufWriter::new(f) })
    }

    fn write(&mut self, v: serde_json::Value) -> Result<(), HarnessError> {
        writeln!(self.out, "{v}")?;
        Ok(())
    }
}

fn stage_name(stage: Stage) -> &'static str {
    match stage {
        Stage::One => "stage1",
        Stage::Two => "stage2",
    }
}

fn build_agent(cfg: &RunConfig, resume: Option<&TrainingCheckpoint>) -> Result<(Agent, u64, CurriculumState), HarnessError> {
    let n = cfg.ppo.num_envs;
    let fresh_curriculum = || CurriculumState::new(n, cfg.start_level, cfg.max_level);
    if let Some(ck) = resume {
        if ck.stage != cfg.stage || ck.seed != cfg.seed {
            return Err(HarnessError::Config(format!(
                "checkpoint is stage {} seed {}, config is stage {} seed {}",
                ck.stage.number(),
                ck.seed,
                cfg.stage.number(),
                cfg.seed
            )));
        }
        check_agent(&ck.agent, cfg)?;
        if ck.curriculum.num_envs() != n {
            return Err(HarnessError::Config(format!(
                "checkpoint has {} environments, config {}",
                ck.curriculum.num_envs(),
                n
            )));
        }
        return Ok((ck.agent.clone(), ck.iteration, ck.curriculum.clone()));
    }
    if let Some(init) = &cfg.init {
        let ck = TrainingCheckpoint::load(init)?;
        check_agent(&ck.agent, cfg)?;
        let mut agent = ck.agent;
        // fine-tuning keeps weights and observation statistics, not optimizer moments
        agent.policy_opt = nn::AdamState::new(agent.policy.num_params(), cfg.ppo.lr);
        agent.critic_opts = agent.critics.iter().map(|c| nn::AdamState::new(c.num_params(), cfg.ppo.lr)).collect();
        return Ok((agent, 0, fresh_curriculum()));
    }
    let mut rng = rng::stream(cfg.seed, Purpose::Init, 0);
    let agent = Agent::new(OBS_DIM, ACT_DIM, &cfg.hidden, cfg.critic, cfg.ppo.lr, &mut rng)?;
    Ok((agent, 0, fresh_curriculum()))
}

fn check_agent(agent: &Agent, cfg: &RunConfig) -> Result<(), HarnessError> {
    if agent.obs_dim() != OBS_DIM || agent.act_dim() != ACT_DIM {
        return Err(HarnessError::Config(format!(
            "checkpoint dimensions {}x{} differ from the environment {}x{}",
            agent.obs_dim(),
            agent.act_dim(),
            OBS_DIM,
            ACT_DIM
        )));
    }
    if agent.hidden() != cfg.hidden.as_slice() {
        return Err(HarnessError::Config(format!(
            "checkpoint hidden sizes {:?} differ from net.hidden {:?}",
            agent.hidden(),
            cfg.hidden
        )));
    }
    if agent.mode != cfg.critic {
        return Err(HarnessError::Config(format!("checkpoint critic mode {:?} differs from config", agent.mode)));
    }
    Ok(())
}

struct Rollout<'a> {
    cfg: &'a RunConfig,
    kinds: Vec<TerrainKind>,
    mode: DynamicsMode,
    slots: Vec<Slot>,
}

impl<'a> Rollout<'a> {
    fn new(cfg: &'a RunConfig, curriculum: &CurriculumState, start_iteration: u64) -> Result<Self, HarnessError> {
        let env_cfg = cfg.env_config();
        let kinds = cfg.kinds();
        let mut r = Self { cfg, kinds, mode: cfg.dynamics_mode(), slots: Vec::new() };
        for e in 0..cfg.ppo.num_envs {
            // a resumed run gets fresh streams so it never replays consumed randomness
            let rng = rng::stream(rng::mix(cfg.seed, start_iteration), Purpose::Env, e as u64);
            let kind = r.kinds[e % r.kinds.len()];
            r.slots.push(Slot {
                env: WalkerEnv::new(env_cfg.clone()),
                rng,
                kind,
                obs: Observation::default(),
                command: Command::default(),
                dense: 0.0,
                sparse: 0.0,
            });
            r.reset(e, curriculum)?;
        }
        Ok(r)
    }

    fn reset(&mut self, e: usize, curriculum: &CurriculumState) -> Result<(), HarnessError> {
        let cfg = self.cfg;
        let level = if cfg.curriculum { curriculum.level[e] } else { cfg.fixed_level };
        let slot = &mut self.slots[e];
        let mut spec = TerrainSpec::new(slot.kind, level, slot.rng.gen())?;
        spec.surface_noise = cfg.terrain_noise;
        let pair = Arc::new(generate(&spec)?);
        slot.command = sample_command(cfg.stage, &mut slot.rng);
        slot.obs = slot.env.reset(pair, self.mode, slot.command, &mut slot.rng);
        slot.dense = 0.0;
        slot.sparse = 0.0;
        Ok(())
    }
}

fn normalized_batch(agent: &Agent, rows: &[&[f64]]) -> Array2<f64> {
    let d = agent.obs_dim();
    let mut m = Array2::zeros((rows.len(), d));
    for (i, r) in rows.iter().enumerate() {
        let mut out = vec![0.0; d];
        agent.norm.normalize_into(r, &mut out);
        m.row_mut(i).assign(&ndarray::ArrayView1::from(&out));
    }
    m
}

/// Trains per `cfg`, writing artifacts to `out`. With `resume`, continues
/// from a checkpoint of the same run.
pub fn train(
    cfg: &RunConfig,
    out: &Path,
    resume: Option<&TrainingCheckpoint>,
    progress: Option<Progress<'_>>,
) -> Result<TrainOutcome, HarnessError> {
    cfg.validate()?;
    fs::create_dir_all(out)?;
    let (mut agent, start, mut curriculum) = build_agent(cfg, resume)?;
    let mut events = Events::create(&out.join("events.log"), resume.is_some())?;
    let csv_path = out.join("train.csv");
    let mut csv = if resume.is_some() && csv_path.exists() {
        csv::WriterBuilder::new().from_writer(fs::OpenOptions::new().append(true).open(&csv_path)?)
    } else {
        let mut w = csv::Writer::from_path(&csv_path)?;
        w.write_record(TrainRow::header())?;
        w
    };
    events.write(json!({
        "event": "start",
        "stage": cfg.stage.number(),
        "seed": cfg.seed,
        "start_iteration": start,
        "config": cfg.to_text(),
    }))?;

    let mut progress = progress;
    let mut rollout = Rollout::new(cfg, &curriculum, start)?;
    let ppo = cfg.footstep_ppo();
    let n_env = cfg.ppo.num_envs;
    let horizon = cfg.ppo.steps_per_iter;
    let scale = cfg.env.action_scale;
    let end = cfg.iterations as u64;
    let mut rows = Vec::new();
    let mut last_ckpt = None;
    let mut iteration = start;

    while iteration < end {
        let mut buf = RolloutBuffer::new(n_env, horizon, OBS_DIM, ACT_DIM);
        buf.log_std = agent.policy.log_std.clone();
        let mut raw_rows: Vec<f64> = Vec::with_capacity(n_env * horizon * OBS_DIM);
        let mut row = TrainRow {
            iteration: iteration + 1,
            stage: cfg.stage.number(),
            mean_level: 0.0,
            passed_all: 0,
            episodes: 0,
            successes: 0,
            mean_episode_dense: 0.0,
            mean_episode_sparse: 0.0,
            mean_step_dense: 0.0,
            mean_step_sparse: 0.0,
            components: [0.0; DenseComponents::COUNT],
            touchdowns: 0,
            bad_samples: 0,
            sole_samples: 0,
            stats: UpdateStats::default(),
        };

        for t in 0..horizon {
            let obs_rows: Vec<&[f64]> = rollout.slots.iter().map(|s| s.obs.as_slice()).collect();
            let obs_norm = normalized_batch(&agent, &obs_rows);
            let means = agent.policy.mean(obs_norm.view())?;
            let (v1, v2) = agent.values(obs_norm.view())?;
            for r in &obs_rows {
                raw_rows.extend_from_slice(r);
            }
            let mut truncated: Vec<(usize, Observation)> = Vec::new();
            for e in 0..n_env {
                let mean = means.row(e).to_vec();
                let slot = &mut rollout.slots[e];
                let raw = nn::sample(&mean, &agent.policy.log_std, &mut slot.rng);
                let logp = nn::log_prob(&mean, &agent.policy.log_std, &raw);
                let action = Action::from_policy(&raw, scale)
                    .map_err(|err| HarnessError::Numeric(format!("iteration {}: {err}", iteration + 1)))?;
                let step = slot.env.step(action, &mut slot.rng).expect("slot episodes stay active");
                let (r1, r2) = (step.reward.dense, step.reward.sparse);
                slot.dense += r1;
                slot.sparse += r2;
                row.mean_step_dense += r1;
                row.mean_step_sparse += r2;
                for (acc, c) in row.components.iter_mut().zip(step.reward.components.as_array()) {
                    *acc += c;
                }
                row.touchdowns += 1;
                row.bad_samples += step.info.touchdown.bad;
                row.sole_samples += step.info.touchdown.n;
                let end_kind = if !step.done {
                    EndKind::No
                } else if step.info.termination.is_some() {
                    EndKind::Terminal
                } else {
                    EndKind::Truncated
                };
                let obs_row = obs_norm.row(e);
                buf.set(
                    t,
                    e,
                    &Transition {
                        obs: obs_row.as_slice().expect("row-major"),
                        action: &raw,
                        mean: &mean,
                        logp,
                        r1,
                        r2,
                        v1: v1[e],
                        v2: v2[e],
                        end: end_kind,
                        next_v1: 0.0,
                        next_v2: 0.0,
                    },
                );
                if step.done {
                    let kind = slot.kind;
                    let command = slot.command;
                    row.episodes += 1;
                    row.successes += step.info.success as usize;
                    row.mean_episode_dense += slot.dense;
                    row.mean_episode_sparse += slot.sparse;
                    if end_kind == EndKind::Truncated {
                        truncated.push((e, step.observation));
                    }
                    if cfg.curriculum && can_finish(kind, command, cfg) {
                        let tr = curriculum.update(e, step.info.success);
                        events.write(json!({
                            "event": "curriculum",
                            "iteration": iteration + 1,
                            "env": tr.env,
                            "success": tr.success,
                            "level_before": tr.level_before,
                            "level_after": tr.level_after,
                            "streak": tr.streak_after,
                            "passed_all": tr.passed_all,
                        }))?;
                    }
                    rollout.reset(e, &curriculum)?;
                } else {
                    slot.obs = step.observation;
                }
            }
            if !truncated.is_empty() {
                let rows: Vec<&[f64]> = truncated.iter().map(|(_, o)| o.as_slice()).collect();
                let (n1, n2) = agent.values(normalized_batch(&agent, &rows).view())?;
                for (k, (e, _)) in truncated.iter().enumerate() {
                    let i = buf.index(t, *e);
                    buf.next_v1[i] = n1[k];
                    buf.next_v2[i] = n2[k];
                }
            }
        }
        let obs_rows: Vec<&[f64]> = rollout.slots.iter().map(|s| s.obs.as_slice()).collect();
        let (b1, b2) = agent.values(normalized_batch(&agent, &obs_rows).view())?;
        buf.bootstrap1 = b1;
        buf.bootstrap2 = b2;

        agent.norm.update(raw_rows.chunks(OBS_DIM));
        let mut update_rng = rng::stream(cfg.seed, Purpose::Update, iteration);
        let stats = match agent.update(&buf, &ppo, &mut update_rng) {
            Ok(s) => s,
            Err(err) => {
                let dump = out.join(format!("abort_{}.bin", iteration + 1));
                TrainingCheckpoint { agent, iteration, stage: cfg.stage, seed: cfg.seed, curriculum: curriculum.clone() }
                    .save(&dump)?;
                events.write(json!({
                    "event": "abort",
                    "iteration": iteration + 1,
                    "error": err.to_string(),
                    "state_dump": dump.display().to_string(),
                    "mean_step_dense": row.mean_step_dense / (n_env * horizon) as f64,
                    "mean_step_sparse": row.mean_step_sparse / (n_env * horizon) as f64,
                }))?;
                events.out.flush()?;
                csv.flush()?;
                return Err(match err {
                    RlError::NonFinite(m) => HarnessError::Numeric(format!("iteration {}: {m}", iteration + 1)),
                    e => e.into(),
                });
            }
        };
        iteration += 1;

        let steps = (n_env * horizon) as f64;
        row.mean_step_dense /= steps;
        row.mean_step_sparse /= steps;
        row.components.iter_mut().for_each(|c| *c /= steps);
        if row.episodes > 0 {
            row.mean_episode_dense /= row.episodes as f64;
            row.mean_episode_sparse /= row.episodes as f64;
        }
        row.mean_level = if cfg.curriculum { curriculum.mean_level() } else { cfg.fixed_level as f64 };
        row.passed_all = curriculum.passed_all.iter().filter(|&&p| p).count();
        row.stats = stats;
        csv.write_record(row.record())?;
        if let Some(p) = progress.as_mut() {
            p(&row);
        }
        rows.push(row);

        if iteration % cfg.checkpoint_every as u64 == 0 || iteration == end {
            let ck = TrainingCheckpoint {
                agent: agent.clone(),
                iteration,
                stage: cfg.stage,
                seed: cfg.seed,
                curriculum: curriculum.clone(),
            };
            let path = out.join(format!("ckpt_{iteration}.bin"));
            ck.save(&path)?;
            events.write(json!({ "event": "checkpoint", "iteration": iteration, "path": path.display().to_string() }))?;
            last_ckpt = Some((ck, path));
        }
    }
    csv.flush()?;
    let (checkpoint, checkpoint_path) = match last_ckpt {
        Some(c) => c,
        None => {
            // nothing left to train: the resumed state is final
            let ck = TrainingCheckpoint { agent, iteration, stage: cfg.stage, seed: cfg.seed, curriculum };
            let path = out.join(format!("ckpt_{iteration}.bin"));
            ck.save(&path)?;
            (ck, path)
        }
    };
    events.write(json!({ "event": "end", "iteration": iteration, "checkpoint": checkpoint_path.display().to_string() }))?;
    events.out.flush()?;
    Ok(TrainOutcome { checkpoint, checkpoint_path, rows })
}

pub fn train_stage1(cfg: &RunConfig, out: &Path, progress: Option<Progress<'_>>) -> Result<TrainOutcome, HarnessError> {
    if cfg.stage != Stage::One {
        return Err(HarnessError::Config("train-stage1 needs stage = 1".into()));
    }
    train(cfg, out, None, progress)
}

pub fn train_stage2(cfg: &RunConfig, out: &Path, progress: Option<Progress<'_>>) -> Result<TrainOutcome, HarnessError> {
    if cfg.stage != Stage::Two {
        return Err(HarnessError::Config("train-stage2 needs stage = 2".into()));
    }
    train(cfg, out, None, progress)
}

/// Output directory name for a stage.
pub fn stage_dir(out: &Path, stage: Stage) -> PathBuf {
    out.join(stage_name(stage))
}
