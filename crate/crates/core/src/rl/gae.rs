use serde::{Deserialize, Serialize};

use super::RlError;

/// How a transition ends its trajectory segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Done {
    No,
    /// Failure: the next state has no value.
    Terminal,
    /// Non-failure end (success or time limit), bootstrapped with this value.
    Truncated(f64),
}

impl Done {
    /// Value of the state after step `t` and whether the advantage chain continues.
    fn next(self, t: usize, values: &[f64], bootstrap: f64) -> (f64, bool) {
        match self {
            Done::No if t + 1 < values.len() => (values[t + 1], true),
            Done::No => (bootstrap, false),
            Done::Terminal => (0.0, false),
            Done::Truncated(v) => (v, false),
        }
    }
}

/// One-step TD residuals `r_t + gamma V(s_{t+1}) - V(s_t)`.
pub fn td_residuals(rewards: &[f64], values: &[f64], dones: &[Done], bootstrap: f64, gamma: f64) -> Result<Vec<f64>, RlError> {
    check_lengths(rewards, values, dones)?;
    Ok((0..rewards.len())
        .map(|t| {
            let (next, _) = dones[t].next(t, values, bootstrap);
            rewards[t] + gamma * next - values[t]
        })
        .collect())
}

fn check_lengths(rewards: &[f64], values: &[f64], dones: &[Done]) -> Result<(), RlError> {
    if rewards.len() != values.len() || rewards.len() != dones.len() {
        return Err(RlError::Shape(format!(
            "gae inputs differ in length: rewards {}, values {}, dones {}",
            rewards.len(),
            values.len(),
            dones.len()
        )));
    }
    Ok(())
}

/// Generalized advantage estimation by backward recursion over one
/// environment's segment. `bootstrap` is the value after the last step when
/// the segment is cut by the rollout horizon. Returns advantages and
/// lambda-returns (advantage plus value).
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[Done],
    bootstrap: f64,
    gamma: f64,
    lam: f64,
) -> Result<(Vec<f64>, Vec<f64>), RlError> {
    check_lengths(rewards, values, dones)?;
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut carry = 0.0;
    for t in (0..n).rev() {
        let (next, continues) = dones[t].next(t, values, bootstrap);
        let delta = rewards[t] + gamma * next - values[t];
        carry = delta + if continues { gamma * lam * carry } else { 0.0 };
        adv[t] = carry;
    }
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, ret))
}
