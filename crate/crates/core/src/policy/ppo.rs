//! Clipped-surrogate policy optimization with exact reverse-mode gradients.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::buffer::{Advantages, RolloutBuffer};
use super::{gaussian_log_prob, GaussianPolicy, ValueFunction};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub hidden: Vec<usize>,
    pub clip_epsilon: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub learning_rate: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    /// Global gradient-norm clip per network; `0` disables it.
    pub max_grad_norm: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            hidden: super::DEFAULT_HIDDEN.to_vec(),
            clip_epsilon: 0.2,
            epochs: 10,
            minibatch: 64,
            learning_rate: 3e-4,
            gamma: 0.99,
            gae_lambda: 0.95,
            value_coef: 0.5,
            entropy_coef: 0.0,
            max_grad_norm: 0.5,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0) {
            return Err(Error::Parameter(format!(
                "clip epsilon {} outside (0, 1)",
                self.clip_epsilon
            )));
        }
        if self.epochs == 0 || self.minibatch == 0 {
            return Err(Error::Parameter("epochs and minibatch must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Parameter("learning rate must be positive".into()));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) || !(0.0..=1.0).contains(&self.gae_lambda) {
            return Err(Error::Parameter("need gamma in (0,1], lambda in [0,1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    #[serde(with = "crate::codec::f64_blob")]
    m: Vec<f64>,
    #[serde(with = "crate::codec::f64_blob")]
    v: Vec<f64>,
    t: u64,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl Adam {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Descent step on `params` along `grad` (gradient of a loss).
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - BETA1.powi(self.t as i32);
        let bc2 = 1.0 - BETA2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = BETA1 * self.m[i] + (1.0 - BETA1) * grad[i];
            self.v[i] = BETA2 * self.v[i] + (1.0 - BETA2) * grad[i] * grad[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }
}

/// One term of the clipped surrogate.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateSample {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub old_log_prob: f64,
    pub advantage: f64,
}

fn clipped_term(ratio: f64, advantage: f64, eps: f64) -> (f64, bool) {
    let unclipped = ratio * advantage;
    let clipped = ratio.clamp(1.0 - eps, 1.0 + eps) * advantage;
    if clipped < unclipped {
        (clipped, true)
    } else {
        (unclipped, false)
    }
}

/// Mean of `min(r A, clip(r, 1-eps, 1+eps) A)` with `r = pi(a|s) / pi_old(a|s)`.
pub fn surrogate_objective(policy: &GaussianPolicy, samples: &[SurrogateSample], eps: f64) -> f64 {
    let total: f64 = samples
        .iter()
        .map(|s| {
            let lp = gaussian_log_prob(&policy.mean(&s.state), policy.log_std(), &s.action);
            clipped_term((lp - s.old_log_prob).exp(), s.advantage, eps).0
        })
        .sum();
    total / samples.len() as f64
}

/// Gradient of [`surrogate_objective`] with respect to
/// [`GaussianPolicy::flat_params`].
pub fn surrogate_gradient(policy: &GaussianPolicy, samples: &[SurrogateSample], eps: f64) -> Vec<f64> {
    let mut grad = vec![0.0; policy.param_count()];
    let scale = 1.0 / samples.len() as f64;
    for s in samples {
        accumulate_surrogate_grad(policy, s, eps, scale, &mut grad);
    }
    grad
}

/// Adds `scale * d/dtheta min(rA, clip(r)A)` into `grad`. Returns the
/// unscaled term, the new log-probability and whether the clipped branch
/// was active.
fn accumulate_surrogate_grad(
    policy: &GaussianPolicy,
    s: &SurrogateSample,
    eps: f64,
    scale: f64,
    grad: &mut [f64],
) -> (f64, f64, bool) {
    let cache = policy.forward(&s.state);
    let mean = cache.output();
    let log_std = policy.log_std();
    let lp = gaussian_log_prob(mean, log_std, &s.action);
    let ratio = (lp - s.old_log_prob).exp();
    let (term, clipped) = clipped_term(ratio, s.advantage, eps);
    if clipped {
        return (term, lp, true);
    }
    // d(rA)/d(logp) = rA
    let d_logp = scale * ratio * s.advantage;
    let n_net = policy.mean_params().len();
    let mut d_mean = Vec::with_capacity(mean.len());
    for j in 0..mean.len() {
        let var = (2.0 * log_std[j]).exp();
        let diff = s.action[j] - mean[j];
        d_mean.push(d_logp * diff / var);
        grad[n_net + j] += d_logp * (diff * diff / var - 1.0);
    }
    policy
        .shape()
        .backward(policy.mean_params(), &cache, &d_mean, &mut grad[..n_net]);
    (term, lp, false)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PpoDiagnostics {
    pub clip_fraction: f64,
    pub policy_objective: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub minibatch_updates: usize,
}

fn clip_norm(grad: &mut [f64], max_norm: f64) {
    if max_norm <= 0.0 {
        return;
    }
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let k = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= k);
    }
}

/// Runs `epochs` passes of shuffled minibatch steps that ascend the clipped
/// surrogate (plus entropy bonus) for the policy and descend the value
/// regression loss for the critic.
///
/// On any non-finite loss or gradient, every parameter and optimizer state is
/// restored to its pre-update value and an error is returned.
#[allow(clippy::too_many_arguments)]
pub fn ppo_update<R: Rng + ?Sized>(
    policy: &mut GaussianPolicy,
    value: &mut ValueFunction,
    policy_opt: &mut Adam,
    value_opt: &mut Adam,
    buf: &RolloutBuffer,
    adv: &Advantages,
    cfg: &PpoConfig,
    rng: &mut R,
) -> Result<PpoDiagnostics> {
    if buf.is_empty() {
        return Err(Error::EmptyInput("rollout buffer"));
    }
    let backup = (policy.clone(), value.clone(), policy_opt.clone(), value_opt.clone());
    match ppo_inner(policy, value, policy_opt, value_opt, buf, adv, cfg, rng) {
        Ok(d) => Ok(d),
        Err(e) => {
            *policy = backup.0;
            *value = backup.1;
            *policy_opt = backup.2;
            *value_opt = backup.3;
            Err(e)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn ppo_inner<R: Rng + ?Sized>(
    policy: &mut GaussianPolicy,
    value: &mut ValueFunction,
    policy_opt: &mut Adam,
    value_opt: &mut Adam,
    buf: &RolloutBuffer,
    adv: &Advantages,
    cfg: &PpoConfig,
    rng: &mut R,
) -> Result<PpoDiagnostics> {
    let n = buf.len();
    // Normalize advantages over the whole update batch.
    let mean = adv.advantages.iter().sum::<f64>() / n as f64;
    let var = adv.advantages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n as f64;
    let std = var.sqrt();
    let normalized: Vec<f64> = adv
        .advantages
        .iter()
        .map(|a| if std > 1e-12 { (a - mean) / (std + 1e-8) } else { 0.0 })
        .collect();

    let samples: Vec<SurrogateSample> = buf
        .steps
        .iter()
        .zip(&normalized)
        .map(|(t, a)| SurrogateSample {
            state: t.state.clone(),
            action: t.action.clone(),
            old_log_prob: t.log_prob,
            advantage: *a,
        })
        .collect();

    let eps = cfg.clip_epsilon;
    let n_policy = policy.param_count();
    let n_net = n_policy - policy.action_dim();
    let mut order: Vec<usize> = (0..n).collect();
    let mut diag = PpoDiagnostics::default();
    let mut clipped_count = 0usize;
    let mut seen = 0usize;

    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(cfg.minibatch) {
            let scale = 1.0 / chunk.len() as f64;

            // Policy: gradient of the loss = -(surrogate + c_ent * entropy).
            let mut pg = vec![0.0; n_policy];
            let mut objective = 0.0;
            let mut kl = 0.0;
            for &i in chunk {
                let s = &samples[i];
                let (term, lp, clipped) = accumulate_surrogate_grad(policy, s, eps, scale, &mut pg);
                objective += term * scale;
                kl += (s.old_log_prob - lp) * scale;
                if clipped {
                    clipped_count += 1;
                }
            }
            seen += chunk.len();
            for g in pg.iter_mut().skip(n_net) {
                *g += cfg.entropy_coef;
            }
            pg.iter_mut().for_each(|g| *g = -*g);

            // Value: 0.5 * c_v * mean (V(s) - R)^2.
            let vshape = value.shape().clone();
            let mut vg = vec![0.0; value.params().len()];
            let mut vloss = 0.0;
            for &i in chunk {
                let cache = vshape.forward(value.params(), &samples[i].state);
                let err = cache.output()[0] - adv.returns[i];
                vloss += 0.5 * err * err * scale;
                vshape.backward(value.params(), &cache, &[cfg.value_coef * err * scale], &mut vg);
            }

            if !objective.is_finite()
                || !vloss.is_finite()
                || pg.iter().chain(&vg).any(|g| !g.is_finite())
            {
                return Err(Error::Numeric(format!(
                    "non-finite loss or gradient (objective={objective}, value_loss={vloss})"
                )));
            }
            clip_norm(&mut pg, cfg.max_grad_norm);
            clip_norm(&mut vg, cfg.max_grad_norm);

            let mut flat = policy.flat_params();
            policy_opt.step(&mut flat, &pg, cfg.learning_rate);
            policy.set_flat_params(&flat);
            let mut vp = value.params().to_vec();
            value_opt.step(&mut vp, &vg, cfg.learning_rate);
            value.set_params(&vp);

            diag.policy_objective = objective;
            diag.value_loss = vloss;
            diag.approx_kl = kl;
            diag.minibatch_updates += 1;
        }
    }
    diag.clip_fraction = clipped_count as f64 / seen.max(1) as f64;
    diag.entropy = policy.entropy();
    Ok(diag)
}
