use std::f64::consts::PI;

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{Cache, Mlp, NnError};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

/// Diagonal Gaussian policy with a state-independent log standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicy {
    pub net: Mlp,
    pub log_std: Vec<f64>,
}

impl GaussianPolicy {
    pub fn new(obs_dim: usize, act_dim: usize, hidden: &[usize], rng: &mut impl Rng) -> Result<Self, NnError> {
        let sizes: Vec<usize> = std::iter::once(obs_dim).chain(hidden.iter().copied()).chain([act_dim]).collect();
        Ok(Self {
            net: Mlp::orthogonal(&sizes, 2f64.sqrt(), 0.01, rng)?,
            log_std: vec![0.0; act_dim],
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn act_dim(&self) -> usize {
        self.net.output_dim()
    }

    pub fn mean(&self, obs: ArrayView2<f64>) -> Result<Array2<f64>, NnError> {
        self.net.predict(obs)
    }

    pub fn mean_with_cache(&self, obs: ArrayView2<f64>) -> Result<(Array2<f64>, Cache), NnError> {
        self.net.forward(obs)
    }

    pub fn num_params(&self) -> usize {
        self.net.num_params() + self.log_std.len()
    }

    /// Network parameters followed by `log_std`.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut v = self.net.params().to_vec();
        v.extend_from_slice(&self.log_std);
        v
    }

    pub fn set_flat_params(&mut self, p: &[f64]) -> Result<(), NnError> {
        if p.len() != self.num_params() {
            return Err(NnError::Shape(format!("expected {} params, got {}", self.num_params(), p.len())));
        }
        let n = self.net.num_params();
        self.net.set_params(&p[..n])?;
        self.log_std.copy_from_slice(&p[n..]);
        self.clamp_log_std();
        Ok(())
    }

    pub fn clamp_log_std(&mut self) {
        for s in &mut self.log_std {
            *s = s.clamp(LOG_STD_MIN, LOG_STD_MAX);
        }
    }

    /// Flat gradient from gradients with respect to the batch means and `log_std`.
    pub fn param_grads(&self, cache: &Cache, d_mean: ArrayView2<f64>, d_log_std: &[f64]) -> Result<Vec<f64>, NnError> {
        let mut g = self.net.param_grads(cache, d_mean)?;
        g.extend_from_slice(d_log_std);
        Ok(g)
    }
}

pub fn log_prob(mean: &[f64], log_std: &[f64], action: &[f64]) -> f64 {
    let mut lp = 0.0;
    for ((&m, &ls), &a) in mean.iter().zip(log_std).zip(action) {
        let z = (a - m) * (-ls).exp();
        lp += -0.5 * z * z - ls - 0.5 * (2.0 * PI).ln();
    }
    lp
}

/// Gradients of `log_prob` with respect to the mean and to `log_std`, added into the outputs.
pub fn log_prob_grads(mean: &[f64], log_std: &[f64], action: &[f64], scale: f64, d_mean: &mut [f64], d_log_std: &mut [f64]) {
    for i in 0..mean.len() {
        let inv_var = (-2.0 * log_std[i]).exp();
        let diff = action[i] - mean[i];
        d_mean[i] += scale * diff * inv_var;
        d_log_std[i] += scale * (diff * diff * inv_var - 1.0);
    }
}

pub fn entropy(log_std: &[f64]) -> f64 {
    log_std.iter().sum::<f64>() + 0.5 * log_std.len() as f64 * (1.0 + (2.0 * PI).ln())
}

pub fn sample(mean: &[f64], log_std: &[f64], rng: &mut impl Rng) -> Vec<f64> {
    mean.iter()
        .zip(log_std)
        .map(|(&m, &ls)| m + ls.exp() * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// KL divergence from the old diagonal Gaussian to the new one.
pub fn kl_divergence(old_mean: &[f64], old_log_std: &[f64], mean: &[f64], log_std: &[f64]) -> f64 {
    let mut kl = 0.0;
    for i in 0..mean.len() {
        let (s0, s1) = (old_log_std[i].exp(), log_std[i].exp());
        let d = old_mean[i] - mean[i];
        kl += log_std[i] - old_log_std[i] + (s0 * s0 + d * d) / (2.0 * s1 * s1) - 0.5;
    }
    kl
}
