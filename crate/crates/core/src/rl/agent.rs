use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{compute_gae, fuse_advantages, normalize, surrogate_loss, td_residuals, value_loss};
use super::{AdvantageNorm, PpoConfig, RlError, RolloutBuffer, ValueTarget};
use crate::env::{Action, Controller, Observation, WalkerEnv, ACT_DIM};
use crate::nn::{self, AdamState, Decoder, Encoder, GaussianPolicy, Mlp, NnError, RunningNorm};

pub const CKPT_MAGIC: [u8; 4] = *b"SWCK";
pub const CKPT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CriticMode {
    /// One critic per reward group.
    Double,
    /// A single critic on the summed reward.
    Single,
}

impl CriticMode {
    pub fn critics(self) -> usize {
        match self {
            CriticMode::Double => 2,
            CriticMode::Single => 1,
        }
    }
}

/// Summary of one update call, averaged over minibatch steps.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UpdateStats {
    pub mean_kl: f64,
    pub value_loss1: f64,
    pub value_loss2: f64,
    pub surrogate: f64,
    pub entropy: f64,
    pub policy_grad_norm: f64,
    pub critic1_grad_norm: f64,
    pub critic2_grad_norm: f64,
    pub lr: f64,
    /// Mean magnitude of each group's weighted share of the fused advantage.
    pub dense_contribution: f64,
    pub sparse_contribution: f64,
}

/// Policy, critics, their optimizers and the shared observation normalizer.
#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub mode: CriticMode,
    pub policy: GaussianPolicy,
    pub critics: Vec<Mlp>,
    pub policy_opt: AdamState,
    pub critic_opts: Vec<AdamState>,
    pub norm: RunningNorm,
}

impl Agent {
    /// Initialization draws the policy first, then critics in order, so a
    /// single-critic agent's critic equals the first critic of a double one.
    pub fn new(
        obs_dim: usize,
        act_dim: usize,
        hidden: &[usize],
        mode: CriticMode,
        lr: f64,
        rng: &mut impl Rng,
    ) -> Result<Self, RlError> {
        let policy = GaussianPolicy::new(obs_dim, act_dim, hidden, rng)?;
        let sizes: Vec<usize> = std::iter::once(obs_dim).chain(hidden.iter().copied()).chain([1]).collect();
        let critics = (0..mode.critics())
            .map(|_| Mlp::orthogonal(&sizes, 2f64.sqrt(), 1.0, rng))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            mode,
            policy_opt: AdamState::new(policy.num_params(), lr),
            critic_opts: critics.iter().map(|c| AdamState::new(c.num_params(), lr)).collect(),
            policy,
            critics,
            norm: RunningNorm::new(obs_dim),
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.policy.obs_dim()
    }

    pub fn act_dim(&self) -> usize {
        self.policy.act_dim()
    }

    pub fn hidden(&self) -> &[usize] {
        let s = self.policy.net.sizes();
        &s[1..s.len() - 1]
    }

    pub fn lr(&self) -> f64 {
        self.policy_opt.lr
    }

    /// Values of both groups; a single critic reports its estimate as group one and zero for group two.
    pub fn values(&self, obs: ArrayView2<f64>) -> Result<(Vec<f64>, Vec<f64>), RlError> {
        let v1 = self.critics[0].predict(obs)?.into_raw_vec_and_offset().0;
        let v2 = match self.mode {
            CriticMode::Double => self.critics[1].predict(obs)?.into_raw_vec_and_offset().0,
            CriticMode::Single => vec![0.0; v1.len()],
        };
        Ok((v1, v2))
    }

    /// Advantages and value targets per critic.
    fn advantages(&self, buf: &RolloutBuffer, cfg: &PpoConfig) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>), RlError> {
        let n = buf.len();
        let groups: Vec<(Vec<f64>, &[f64], &[f64], &[f64])> = match self.mode {
            CriticMode::Double => vec![
                (buf.r1.clone(), &buf.v1, &buf.next_v1, &buf.bootstrap1),
                (buf.r2.clone(), &buf.v2, &buf.next_v2, &buf.bootstrap2),
            ],
            CriticMode::Single => {
                let r: Vec<f64> = buf.r1.iter().zip(&buf.r2).map(|(a, b)| a + b).collect();
                vec![(r, &buf.v1, &buf.next_v1, &buf.bootstrap1)]
            }
        };
        let mut advs = Vec::new();
        let mut targets = Vec::new();
        for (rewards, values, next, boot) in groups {
            let mut adv = vec![0.0; n];
            let mut tgt = vec![0.0; n];
            for e in 0..buf.num_envs {
                let r = buf.env_series(&rewards, e);
                let v = buf.env_series(values, e);
                let d = buf.env_dones(e, next);
                let (a, ret) = compute_gae(&r, &v, &d, boot[e], cfg.gamma, cfg.lam)?;
                let target = match cfg.value_target {
                    ValueTarget::LambdaReturn => ret,
                    ValueTarget::OneStep => td_residuals(&r, &v, &d, boot[e], cfg.gamma)?
                        .iter()
                        .zip(&v)
                        .map(|(delta, v)| delta + v)
                        .collect(),
                };
                for t in 0..buf.horizon {
                    let i = buf.index(t, e);
                    adv[i] = a[t];
                    tgt[i] = target[t];
                }
            }
            advs.push(adv);
            targets.push(tgt);
        }
        Ok((advs, targets))
    }

    /// Combined advantage of the given samples.
    fn combine(&self, advs: &[Vec<f64>], idx: &[usize], cfg: &PpoConfig) -> Result<(Vec<f64>, f64, f64), RlError> {
        let pick = |a: &Vec<f64>| idx.iter().map(|&i| a[i]).collect::<Vec<f64>>();
        match self.mode {
            CriticMode::Double => {
                let (a1, a2) = (pick(&advs[0]), pick(&advs[1]));
                let fused = fuse_advantages(&a1, &a2, cfg.w1, cfg.w2)?;
                let n1 = normalize(&a1)?;
                let n2 = normalize(&a2)?;
                let c1 = n1.iter().map(|v| (cfg.w1 * v).abs()).sum::<f64>() / n1.len() as f64;
                let c2 = n2.iter().map(|v| (cfg.w2 * v).abs()).sum::<f64>() / n2.len() as f64;
                Ok((fused, c1, c2))
            }
            CriticMode::Single => {
                let a = normalize(&pick(&advs[0]))?;
                let c = a.iter().map(|v| v.abs()).sum::<f64>() / a.len() as f64;
                Ok((a, c, 0.0))
            }
        }
    }

    /// Fused advantage over the whole buffer, as used by an iteration-level update.
    pub fn fused_advantages(&self, buf: &RolloutBuffer, cfg: &PpoConfig) -> Result<Vec<f64>, RlError> {
        let (advs, _) = self.advantages(buf, cfg)?;
        let all: Vec<usize> = (0..buf.len()).collect();
        Ok(self.combine(&advs, &all, cfg)?.0)
    }

    /// Runs `epochs` passes of shuffled minibatch steps over a full buffer.
    pub fn update(&mut self, buf: &RolloutBuffer, cfg: &PpoConfig, rng: &mut impl Rng) -> Result<UpdateStats, RlError> {
        cfg.validate()?;
        if buf.obs_dim != self.obs_dim() || buf.act_dim != self.act_dim() {
            return Err(RlError::Shape("buffer dimensions differ from the agent".into()));
        }
        let n = buf.len();
        let (advs, targets) = self.advantages(buf, cfg)?;
        let all: Vec<usize> = (0..n).collect();
        let (iter_adv, c1, c2) = self.combine(&advs, &all, cfg)?;

        let mut stats = UpdateStats { dense_contribution: c1, sparse_contribution: c2, ..Default::default() };
        let mut steps = 0.0;
        let mb_size = n.div_ceil(cfg.minibatches);
        let mut order = all;
        for _ in 0..cfg.epochs {
            order.shuffle(rng);
            for idx in order.chunks(mb_size) {
                let adv = match cfg.advantage_norm {
                    AdvantageNorm::Iteration => idx.iter().map(|&i| iter_adv[i]).collect(),
                    AdvantageNorm::Minibatch => self.combine(&advs, idx, cfg)?.0,
                };
                let obs = gather_rows(&buf.obs, buf.obs_dim, idx);
                let (kl, surrogate, entropy, pnorm) = self.policy_step(buf, idx, obs.view(), &adv, cfg)?;
                stats.mean_kl += kl;
                stats.surrogate += surrogate;
                stats.entropy += entropy;
                stats.policy_grad_norm += pnorm;
                for k in 0..self.critics.len() {
                    let tgt: Vec<f64> = idx.iter().map(|&i| targets[k][i]).collect();
                    let (loss, norm) = self.critic_step(k, obs.view(), &tgt, cfg)?;
                    if k == 0 {
                        stats.value_loss1 += loss;
                        stats.critic1_grad_norm += norm;
                    } else {
                        stats.value_loss2 += loss;
                        stats.critic2_grad_norm += norm;
                    }
                }
                steps += 1.0;
            }
        }
        for v in [
            &mut stats.mean_kl,
            &mut stats.surrogate,
            &mut stats.entropy,
            &mut stats.policy_grad_norm,
            &mut stats.value_loss1,
            &mut stats.value_loss2,
            &mut stats.critic1_grad_norm,
            &mut stats.critic2_grad_norm,
        ] {
            *v /= steps;
        }
        stats.lr = self.policy_opt.lr;
        Ok(stats)
    }

    /// Loss of the policy on a minibatch: negated clipped surrogate minus the entropy bonus.
    /// Returns the loss, the surrogate part, the KL to the behavior policy and the flat gradient.
    pub fn policy_loss_and_grad(
        &self,
        buf: &RolloutBuffer,
        idx: &[usize],
        obs: ArrayView2<f64>,
        adv: &[f64],
        cfg: &PpoConfig,
    ) -> Result<(f64, f64, f64, Vec<f64>), RlError> {
        let (means, cache) = self.policy.mean_with_cache(obs)?;
        let ls = &self.policy.log_std;
        let act = self.act_dim();
        let mut logp_new = Vec::with_capacity(idx.len());
        let mut logp_old = Vec::with_capacity(idx.len());
        let mut kl = 0.0;
        for (b, &i) in idx.iter().enumerate() {
            let m = means.row(b);
            let m = m.as_slice().expect("row-major");
            logp_new.push(nn::log_prob(m, ls, buf.action_row(i)));
            logp_old.push(buf.logp[i]);
            kl += nn::kl_divergence(buf.mean_row(i), &buf.log_std, m, ls);
        }
        kl /= idx.len() as f64;
        let (surrogate, d_logp) = surrogate_loss(&logp_new, &logp_old, adv, cfg.clip);
        let entropy = nn::entropy(ls);
        let loss = surrogate - cfg.entropy_coef * entropy;

        let mut d_mean = Array2::zeros((idx.len(), act));
        let mut d_ls = vec![-cfg.entropy_coef; act];
        for (b, &i) in idx.iter().enumerate() {
            let m = means.row(b).to_vec();
            let mut row = vec![0.0; act];
            nn::log_prob_grads(&m, ls, buf.action_row(i), d_logp[b], &mut row, &mut d_ls);
            for j in 0..act {
                d_mean[[b, j]] = row[j];
            }
        }
        let grads = self.policy.param_grads(&cache, d_mean.view(), &d_ls)?;
        Ok((loss, surrogate, kl, grads))
    }

    fn policy_step(
        &mut self,
        buf: &RolloutBuffer,
        idx: &[usize],
        obs: ArrayView2<f64>,
        adv: &[f64],
        cfg: &PpoConfig,
    ) -> Result<(f64, f64, f64, f64), RlError> {
        let (loss, surrogate, kl, mut grads) = self.policy_loss_and_grad(buf, idx, obs, adv, cfg)?;
        if !loss.is_finite() || !kl.is_finite() {
            return Err(RlError::NonFinite(format!("policy loss {loss}, kl {kl}, lr {}", self.policy_opt.lr)));
        }
        if cfg.desired_kl > 0.0 {
            let lr = &mut self.policy_opt.lr;
            if kl > 2.0 * cfg.desired_kl {
                *lr = (*lr / 1.5).max(cfg.lr_min);
            } else if kl < 0.5 * cfg.desired_kl {
                *lr = (*lr * 1.5).min(cfg.lr_max);
            }
        }
        let norm = nn::clip_global_norm(&mut grads, cfg.max_grad_norm).map_err(|e| nonfinite("policy", e))?;
        let mut flat = self.policy.flat_params();
        self.policy_opt.step(&mut flat, &grads)?;
        self.policy.set_flat_params(&flat)?;
        Ok((kl, surrogate, nn::entropy(&self.policy.log_std), norm))
    }

    /// Value loss of critic `k` on a minibatch and its flat gradient.
    pub fn critic_loss_and_grad(&self, k: usize, obs: ArrayView2<f64>, targets: &[f64]) -> Result<(f64, Vec<f64>), RlError> {
        let critic = &self.critics[k];
        let (out, cache) = critic.forward(obs)?;
        let values = out.as_slice().expect("column of values");
        let (loss, g) = value_loss(values, targets);
        let g = Array2::from_shape_vec((g.len(), 1), g).expect("column");
        let grads = critic.param_grads(&cache, g.view())?;
        Ok((loss, grads))
    }

    fn critic_step(&mut self, k: usize, obs: ArrayView2<f64>, targets: &[f64], cfg: &PpoConfig) -> Result<(f64, f64), RlError> {
        let (loss, mut grads) = self.critic_loss_and_grad(k, obs, targets)?;
        if !loss.is_finite() {
            return Err(RlError::NonFinite(format!("critic {} loss {loss}", k + 1)));
        }
        grads.iter_mut().for_each(|g| *g *= cfg.value_loss_coef);
        let norm = nn::clip_global_norm(&mut grads, cfg.max_grad_norm).map_err(|e| nonfinite("critic", e))?;
        self.critic_opts[k].step(self.critics[k].params_mut(), &grads)?;
        Ok((loss, norm))
    }

    pub fn encode(&self, e: &mut Encoder) {
        e.bytes(&CKPT_MAGIC);
        e.u32(CKPT_VERSION);
        e.u32(self.obs_dim() as u32);
        e.u32(self.act_dim() as u32);
        e.u32(self.critics.len() as u32);
        e.u32(self.hidden().len() as u32);
        for &h in self.hidden() {
            e.u32(h as u32);
        }
        e.f64s(&self.policy.flat_params());
        self.policy_opt.encode(e);
        for (c, o) in self.critics.iter().zip(&self.critic_opts) {
            e.f64s(c.params());
            o.encode(e);
        }
        self.norm.encode(e);
    }

    pub fn decode(d: &mut Decoder<'_>) -> Result<Self, RlError> {
        let magic = d.bytes(4)?;
        if magic != CKPT_MAGIC {
            return Err(NnError::Format(format!("bad magic {magic:?}")).into());
        }
        let version = d.u32()?;
        if version != CKPT_VERSION {
            return Err(NnError::Format(format!("unsupported checkpoint version {version}")).into());
        }
        let obs_dim = d.u32()? as usize;
        let act_dim = d.u32()? as usize;
        let mode = match d.u32()? {
            1 => CriticMode::Single,
            2 => CriticMode::Double,
            k => return Err(NnError::Format(format!("{k} critics")).into()),
        };
        let layers = d.u32()? as usize;
        if layers > 64 {
            return Err(NnError::Format(format!("{layers} hidden layers")).into());
        }
        let hidden = (0..layers).map(|_| d.u32().map(|h| h as usize)).collect::<Result<Vec<_>, _>>()?;
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        let mut agent = Agent::new(obs_dim, act_dim, &hidden, mode, 1e-3, &mut rng)?;
        let flat = d.f64s_exact(agent.policy.num_params())?;
        agent.policy.set_flat_params(&flat)?;
        agent.policy_opt = AdamState::decode(d, flat.len())?;
        for k in 0..agent.critics.len() {
            let p = d.f64s_exact(agent.critics[k].num_params())?;
            agent.critics[k].set_params(&p)?;
            agent.critic_opts[k] = AdamState::decode(d, p.len())?;
        }
        agent.norm = RunningNorm::decode(d, obs_dim)?;
        Ok(agent)
    }
}

fn nonfinite(what: &str, e: NnError) -> RlError {
    RlError::NonFinite(format!("{what} gradient: {e}"))
}

fn gather_rows(data: &[f64], width: usize, idx: &[usize]) -> Array2<f64> {
    let mut out = Vec::with_capacity(idx.len() * width);
    for &i in idx {
        out.extend_from_slice(&data[i * width..(i + 1) * width]);
    }
    Array2::from_shape_vec((idx.len(), width), out).expect("rows")
}

/// Deterministic controller acting with the policy mean.
#[derive(Debug, Clone, Copy)]
pub struct MeanPolicy<'a> {
    pub agent: &'a Agent,
    pub action_scale: [f64; ACT_DIM],
}

impl Controller for MeanPolicy<'_> {
    fn act(&mut self, obs: &Observation, _env: &WalkerEnv) -> Action {
        let x = self.agent.norm.normalize(obs.as_slice());
        let mean = self.agent.policy.net.predict_one(&x).expect("observation width matches the policy");
        Action::from_policy(&mean, self.action_scale).unwrap_or_default()
    }
}
