use std::fs;
use std::path::Path;

use serde::Serialize;

use super::{CurriculumState, HarnessError};
use crate::env::Stage;
use crate::nn::{Decoder, Encoder};
use crate::rl::{Agent, CriticMode};

/// Agent plus the training position it was saved at.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingCheckpoint {
    pub agent: Agent,
    /// Number of completed iterations.
    pub iteration: u64,
    pub stage: Stage,
    pub seed: u64,
    pub curriculum: CurriculumState,
}

/// Human-readable digest for `inspect-checkpoint`.
#[derive(Debug, Clone, Serialize)]
pub struct CheckpointSummary {
    pub iteration: u64,
    pub stage: u8,
    pub seed: u64,
    pub obs_dim: usize,
    pub act_dim: usize,
    pub hidden: Vec<usize>,
    pub critics: usize,
    pub policy_params: usize,
    pub lr: f64,
    pub log_std: Vec<f64>,
    pub normalizer_count: f64,
    pub num_envs: usize,
    pub mean_level: f64,
    pub passed_all: usize,
}

impl TrainingCheckpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut e = Encoder::new();
        self.agent.encode(&mut e);
        e.u64(self.iteration);
        e.u32(self.stage.number() as u32);
        e.u64(self.seed);
        let c = &self.curriculum;
        e.u32(c.num_envs() as u32);
        e.u32(c.max_level as u32);
        for i in 0..c.num_envs() {
            e.u32(c.level[i] as u32);
            e.u32(c.consecutive_successes[i]);
            e.u32(c.passed_all[i] as u32);
        }
        e.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, HarnessError> {
        let fmt = |m: String| HarnessError::Checkpoint(m);
        let mut d = Decoder::new(bytes);
        let agent = Agent::decode(&mut d).map_err(|e| fmt(e.to_string()))?;
        let nn = |e: crate::nn::NnError| fmt(e.to_string());
        let iteration = d.u64().map_err(nn)?;
        let stage = match d.u32().map_err(nn)? {
            1 => Stage::One,
            2 => Stage::Two,
            s => return Err(fmt(format!("invalid stage {s}"))),
        };
        let seed = d.u64().map_err(nn)?;
        let n = d.u32().map_err(nn)? as usize;
        let max_level = d.u32().map_err(nn)?;
        if n > d.remaining().len() / 12 || max_level > crate::terrain::MAX_LEVEL as u32 {
            return Err(fmt("corrupt curriculum trailer".into()));
        }
        let mut c = CurriculumState::new(n, 0, max_level as u8);
        for i in 0..n {
            let level = d.u32().map_err(nn)?;
            if level > max_level {
                return Err(fmt(format!("curriculum level {level} above cap {max_level}")));
            }
            c.level[i] = level as u8;
            c.consecutive_successes[i] = d.u32().map_err(nn)?;
            c.passed_all[i] = match d.u32().map_err(nn)? {
                0 => false,
                1 => true,
                v => return Err(fmt(format!("invalid flag {v}"))),
            };
        }
        if !d.is_empty() {
            return Err(fmt(format!("{} trailing bytes", d.remaining().len())));
        }
        Ok(Self { agent, iteration, stage, seed, curriculum: c })
    }

    pub fn save(&self, path: &Path) -> Result<(), HarnessError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let bytes = fs::read(path).map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            HarnessError::Checkpoint(m) => HarnessError::Checkpoint(format!("{}: {m}", path.display())),
            e => e,
        })
    }

    pub fn summary(&self) -> CheckpointSummary {
        let a = &self.agent;
        CheckpointSummary {
            iteration: self.iteration,
            stage: self.stage.number(),
            seed: self.seed,
            obs_dim: a.obs_dim(),
            act_dim: a.act_dim(),
            hidden: a.hidden().to_vec(),
            critics: match a.mode {
                CriticMode::Double => 2,
                CriticMode::Single => 1,
            },
            policy_params: a.policy.num_params(),
            lr: a.lr(),
            log_std: a.policy.log_std.clone(),
            normalizer_count: a.norm.count,
            num_envs: self.curriculum.num_envs(),
            mean_level: self.curriculum.mean_level(),
            passed_all: self.curriculum.passed_all.iter().filter(|&&p| p).count(),
        }
    }
}
