//! PPO with one critic per reward group.
//!
//! Each group gets its own GAE pass against its own critic. The two advantage
//! streams are normalized independently over the iteration batch and summed
//! with weights `w1`, `w2` before entering the clipped surrogate.

mod agent;
mod buffer;
mod gae;
mod loss;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::NnError;

pub use agent::{Agent, CriticMode, MeanPolicy, UpdateStats, CKPT_MAGIC, CKPT_VERSION};
pub use buffer::{EndKind, RolloutBuffer, Transition};
pub use gae::{compute_gae, td_residuals, Done};
pub use loss::{clipped_objective, fuse_advantages, mean, normalize, std_pop, surrogate_loss, value_loss, STD_FLOOR};

#[derive(Debug, Error)]
pub enum RlError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite training state: {0}")]
    NonFinite(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ValueTarget {
    /// GAE advantage plus the behavior value.
    LambdaReturn,
    /// `r + gamma V(s')` with behavior values.
    OneStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AdvantageNorm {
    /// Statistics over the whole iteration batch, computed once.
    Iteration,
    /// Statistics recomputed inside every minibatch.
    Minibatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpoConfig {
    pub gamma: f64,
    pub lam: f64,
    pub clip: f64,
    pub entropy_coef: f64,
    pub desired_kl: f64,
    pub epochs: usize,
    pub minibatches: usize,
    pub steps_per_iter: usize,
    pub num_envs: usize,
    pub w1: f64,
    pub w2: f64,
    pub value_loss_coef: f64,
    pub lr: f64,
    pub lr_min: f64,
    pub lr_max: f64,
    pub max_grad_norm: f64,
    pub value_target: ValueTarget,
    pub advantage_norm: AdvantageNorm,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            lam: 0.95,
            clip: 0.2,
            entropy_coef: 0.01,
            desired_kl: 0.01,
            epochs: 5,
            minibatches: 4,
            steps_per_iter: 100,
            num_envs: 64,
            w1: 1.0,
            w2: 0.25,
            value_loss_coef: 1.0,
            lr: 1e-3,
            lr_min: 1e-5,
            lr_max: 1e-2,
            max_grad_norm: 1.0,
            value_target: ValueTarget::LambdaReturn,
            advantage_norm: AdvantageNorm::Iteration,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), RlError> {
        let bad = |m: String| Err(RlError::Config(m));
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.lam) {
            return bad(format!("gamma {} and lam {} must lie in [0, 1]", self.gamma, self.lam));
        }
        if !(self.clip > 0.0) {
            return bad(format!("clip must be positive, got {}", self.clip));
        }
        if !(self.w1 >= 0.0 && self.w2 >= 0.0) {
            return bad(format!("advantage weights must be non-negative, got {} {}", self.w1, self.w2));
        }
        if self.epochs == 0 || self.minibatches == 0 || self.steps_per_iter == 0 || self.num_envs == 0 {
            return bad("epochs, minibatches, steps_per_iter and num_envs must be positive".into());
        }
        if self.num_envs * self.steps_per_iter < 2 * self.minibatches {
            return bad("each minibatch needs at least two samples".into());
        }
        if !(self.lr > 0.0 && self.lr_min > 0.0 && self.lr_min <= self.lr_max) {
            return bad(format!("learning rate bounds {} <= {} invalid", self.lr_min, self.lr_max));
        }
        if !(self.max_grad_norm > 0.0) || self.entropy_coef < 0.0 || self.desired_kl < 0.0 {
            return bad("max_grad_norm must be positive, entropy_coef and desired_kl non-negative".into());
        }
        Ok(())
    }
}
