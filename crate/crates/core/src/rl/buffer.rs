use serde::{Deserialize, Serialize};

use super::Done;

/// How a stored transition ended, independent of reward group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum EndKind {
    #[default]
    No,
    Terminal,
    Truncated,
}

/// One environment step as written by the rollout loop.
#[derive(Debug, Clone)]
pub struct Transition<'a> {
    /// Normalized observation the policy acted on.
    pub obs: &'a [f64],
    /// Raw policy-space action sample.
    pub action: &'a [f64],
    pub mean: &'a [f64],
    pub logp: f64,
    pub r1: f64,
    pub r2: f64,
    pub v1: f64,
    pub v2: f64,
    pub end: EndKind,
    /// Values of the state reached by a truncated step.
    pub next_v1: f64,
    pub next_v2: f64,
}

/// Rectangular `horizon x num_envs` storage, step-major: entry `t * num_envs + e`.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBuffer {
    pub num_envs: usize,
    pub horizon: usize,
    pub obs_dim: usize,
    pub act_dim: usize,
    pub obs: Vec<f64>,
    pub actions: Vec<f64>,
    pub means: Vec<f64>,
    /// Behavior log standard deviation, fixed during a rollout.
    pub log_std: Vec<f64>,
    pub logp: Vec<f64>,
    pub r1: Vec<f64>,
    pub r2: Vec<f64>,
    pub v1: Vec<f64>,
    pub v2: Vec<f64>,
    pub ends: Vec<EndKind>,
    pub next_v1: Vec<f64>,
    pub next_v2: Vec<f64>,
    /// Values after the last step of each environment.
    pub bootstrap1: Vec<f64>,
    pub bootstrap2: Vec<f64>,
}

impl RolloutBuffer {
    pub fn new(num_envs: usize, horizon: usize, obs_dim: usize, act_dim: usize) -> Self {
        let n = num_envs * horizon;
        Self {
            num_envs,
            horizon,
            obs_dim,
            act_dim,
            obs: vec![0.0; n * obs_dim],
            actions: vec![0.0; n * act_dim],
            means: vec![0.0; n * act_dim],
            log_std: vec![0.0; act_dim],
            logp: vec![0.0; n],
            r1: vec![0.0; n],
            r2: vec![0.0; n],
            v1: vec![0.0; n],
            v2: vec![0.0; n],
            ends: vec![EndKind::No; n],
            next_v1: vec![0.0; n],
            next_v2: vec![0.0; n],
            bootstrap1: vec![0.0; num_envs],
            bootstrap2: vec![0.0; num_envs],
        }
    }

    pub fn len(&self) -> usize {
        self.num_envs * self.horizon
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, t: usize, env: usize) -> usize {
        t * self.num_envs + env
    }

    pub fn set(&mut self, t: usize, env: usize, tr: &Transition<'_>) {
        let i = self.index(t, env);
        self.obs[i * self.obs_dim..(i + 1) * self.obs_dim].copy_from_slice(tr.obs);
        self.actions[i * self.act_dim..(i + 1) * self.act_dim].copy_from_slice(tr.action);
        self.means[i * self.act_dim..(i + 1) * self.act_dim].copy_from_slice(tr.mean);
        self.logp[i] = tr.logp;
        self.r1[i] = tr.r1;
        self.r2[i] = tr.r2;
        self.v1[i] = tr.v1;
        self.v2[i] = tr.v2;
        self.ends[i] = tr.end;
        self.next_v1[i] = tr.next_v1;
        self.next_v2[i] = tr.next_v2;
    }

    pub fn obs_row(&self, i: usize) -> &[f64] {
        &self.obs[i * self.obs_dim..(i + 1) * self.obs_dim]
    }

    pub fn action_row(&self, i: usize) -> &[f64] {
        &self.actions[i * self.act_dim..(i + 1) * self.act_dim]
    }

    pub fn mean_row(&self, i: usize) -> &[f64] {
        &self.means[i * self.act_dim..(i + 1) * self.act_dim]
    }

    /// Per-environment sequence of `field` values in time order.
    pub fn env_series(&self, field: &[f64], env: usize) -> Vec<f64> {
        (0..self.horizon).map(|t| field[self.index(t, env)]).collect()
    }

    /// Done markers of one environment, with truncations carrying `next_values`.
    pub fn env_dones(&self, env: usize, next_values: &[f64]) -> Vec<Done> {
        (0..self.horizon)
            .map(|t| {
                let i = self.index(t, env);
                match self.ends[i] {
                    EndKind::No => Done::No,
                    EndKind::Terminal => Done::Terminal,
                    EndKind::Truncated => Done::Truncated(next_values[i]),
                }
            })
            .collect()
    }
}
