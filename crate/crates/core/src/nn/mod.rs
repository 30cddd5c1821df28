//! Small dense networks in 64-bit floats: MLPs with hand-written reverse
//! passes, a diagonal Gaussian policy head, Adam and gradient clipping.

mod codec;
mod mlp;
mod policy;

use thiserror::Error;

pub use codec::{Decoder, Encoder};
pub use mlp::{elu, elu_grad, Cache, Mlp};
pub use policy::{entropy, kl_divergence, log_prob, log_prob_grads, sample, GaussianPolicy, LOG_STD_MAX, LOG_STD_MIN};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("cache does not belong to the current parameters")]
    StaleCache,
    #[error("non-finite gradient (entry {0})")]
    NonFinite(usize),
    #[error("malformed checkpoint: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(n: usize, lr: f64) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0, lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    /// One bias-corrected Adam step.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<(), NnError> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(NnError::Shape(format!(
                "adam over {} params got {} params / {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mhat = self.m[i] / c1;
            let vhat = self.v[i] / c2;
            params[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
        }
        Ok(())
    }

    pub fn encode(&self, e: &mut Encoder) {
        e.f64s(&self.m);
        e.f64s(&self.v);
        e.u64(self.t);
        e.f64(self.lr);
        e.f64(self.beta1);
        e.f64(self.beta2);
        e.f64(self.eps);
    }

    pub fn decode(d: &mut Decoder<'_>, n: usize) -> Result<Self, NnError> {
        let m = d.f64s_exact(n)?;
        let v = d.f64s_exact(n)?;
        Ok(Self { m, v, t: d.u64()?, lr: d.f64()?, beta1: d.f64()?, beta2: d.f64()?, eps: d.f64()? })
    }
}

pub fn global_norm(grads: &[f64]) -> f64 {
    grads.iter().map(|g| g * g).sum::<f64>().sqrt()
}

/// Rescales `grads` to norm `max` when larger. Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [f64], max: f64) -> Result<f64, NnError> {
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(NnError::NonFinite(i));
    }
    let norm = global_norm(grads);
    if norm > max {
        let s = max / norm;
        grads.iter_mut().for_each(|g| *g *= s);
    }
    Ok(norm)
}

/// Running mean and variance of observations, merged batch by batch.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningNorm {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub count: f64,
}

impl RunningNorm {
    pub const STD_FLOOR: f64 = 1e-2;
    pub const CLIP: f64 = 10.0;

    pub fn new(dim: usize) -> Self {
        Self { mean: vec![0.0; dim], var: vec![1.0; dim], count: 0.0 }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Merges the statistics of `rows` (each of length `dim`).
    pub fn update<'a>(&mut self, rows: impl IntoIterator<Item = &'a [f64]>) {
        let d = self.dim();
        let mut n = 0.0;
        let mut mean = vec![0.0; d];
        let mut m2 = vec![0.0; d];
        for row in rows {
            n += 1.0;
            for i in 0..d {
                let delta = row[i] - mean[i];
                mean[i] += delta / n;
                m2[i] += delta * (row[i] - mean[i]);
            }
        }
        if n == 0.0 {
            return;
        }
        if self.count == 0.0 {
            self.mean = mean;
            self.var = m2.iter().map(|v| v / n).collect();
            self.count = n;
            return;
        }
        let total = self.count + n;
        for i in 0..d {
            let delta = mean[i] - self.mean[i];
            let m_a = self.var[i] * self.count;
            let m2_total = m_a + m2[i] + delta * delta * self.count * n / total;
            self.mean[i] += delta * n / total;
            self.var[i] = m2_total / total;
        }
        self.count = total;
    }

    pub fn normalize_into(&self, x: &[f64], out: &mut [f64]) {
        for i in 0..x.len() {
            let z = (x[i] - self.mean[i]) / (self.var[i].sqrt() + Self::STD_FLOOR);
            out[i] = z.clamp(-Self::CLIP, Self::CLIP);
        }
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.normalize_into(x, &mut out);
        out
    }

    pub fn encode(&self, e: &mut Encoder) {
        e.f64s(&self.mean);
        e.f64s(&self.var);
        e.f64(self.count);
    }

    pub fn decode(d: &mut Decoder<'_>, dim: usize) -> Result<Self, NnError> {
        Ok(Self { mean: d.f64s_exact(dim)?, var: d.f64s_exact(dim)?, count: d.f64()? })
    }
}
