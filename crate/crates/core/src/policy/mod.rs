//! Stochastic policies, value functions and the clipped policy-gradient update.

mod buffer;
mod ppo;

pub use buffer::{compute_gae, Advantages, RolloutBuffer, Transition};
pub use ppo::{
    ppo_update, surrogate_gradient, surrogate_objective, Adam, PpoConfig, PpoDiagnostics,
    SurrogateSample,
};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::codec::ParamBlob;
use crate::error::{Error, Result};
use crate::nn::{ForwardCache, MlpShape};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;
const LOG_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

pub const DEFAULT_HIDDEN: [usize; 2] = [64, 64];

/// Diagonal Gaussian policy: a tanh network gives the action mean, and a
/// state-independent log standard deviation gives the spread.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicy {
    shape: MlpShape,
    mean_params: Vec<f64>,
    log_std: Vec<f64>,
}

impl GaussianPolicy {
    pub fn new<R: Rng + ?Sized>(state_dim: usize, action_dim: usize, hidden: &[usize], rng: &mut R) -> Self {
        let shape = MlpShape::new(state_dim, hidden, action_dim);
        let mean_params = shape.init(rng, 0.01);
        Self {
            shape,
            mean_params,
            log_std: vec![0.0; action_dim],
        }
    }

    pub fn from_parts(shape: MlpShape, mean_params: Vec<f64>, log_std: Vec<f64>) -> Result<Self> {
        if mean_params.len() != shape.param_count() || log_std.len() != shape.output_dim() {
            return Err(Error::Parameter(format!(
                "policy parameter block has {} + {} values, shape {:?} needs {} + {}",
                mean_params.len(),
                log_std.len(),
                shape.sizes,
                shape.param_count(),
                shape.output_dim()
            )));
        }
        let mut p = Self {
            shape,
            mean_params,
            log_std,
        };
        p.clamp_log_std();
        Ok(p)
    }

    pub fn shape(&self) -> &MlpShape {
        &self.shape
    }

    pub fn state_dim(&self) -> usize {
        self.shape.input_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.log_std.len()
    }

    pub fn log_std(&self) -> &[f64] {
        &self.log_std
    }

    pub fn set_log_std(&mut self, value: f64) {
        self.log_std.iter_mut().for_each(|v| *v = value);
        self.clamp_log_std();
    }

    /// Total parameter count: network weights and biases plus one log-std per action.
    pub fn param_count(&self) -> usize {
        self.mean_params.len() + self.log_std.len()
    }

    /// Network parameters followed by the log-std vector.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut v = self.mean_params.clone();
        v.extend_from_slice(&self.log_std);
        v
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) {
        let n = self.mean_params.len();
        self.mean_params.copy_from_slice(&flat[..n]);
        self.log_std.copy_from_slice(&flat[n..]);
        self.clamp_log_std();
    }

    /// Like [`set_flat_params`](Self::set_flat_params) but without the log-std clamp.
    /// Used by finite-difference checks that must perturb every coordinate freely.
    pub fn set_flat_params_unclamped(&mut self, flat: &[f64]) {
        let n = self.mean_params.len();
        self.mean_params.copy_from_slice(&flat[..n]);
        self.log_std.copy_from_slice(&flat[n..]);
    }

    pub(crate) fn clamp_log_std(&mut self) {
        for v in &mut self.log_std {
            *v = v.clamp(LOG_STD_MIN, LOG_STD_MAX);
        }
    }

    pub fn mean(&self, state: &[f64]) -> Vec<f64> {
        self.shape.output(&self.mean_params, state)
    }

    pub(crate) fn forward(&self, state: &[f64]) -> ForwardCache {
        self.shape.forward(&self.mean_params, state)
    }

    pub(crate) fn mean_params(&self) -> &[f64] {
        &self.mean_params
    }

    /// Exact log-density of `action` at `state`.
    pub fn log_prob(&self, state: &[f64], action: &[f64]) -> f64 {
        gaussian_log_prob(&self.mean(state), &self.log_std, action)
    }

    /// Differential entropy of the action distribution (state-independent).
    pub fn entropy(&self) -> f64 {
        self.log_std.iter().map(|l| l + 0.5 + LOG_SQRT_2PI).sum()
    }

    pub fn to_blob(&self) -> ParamBlob {
        ParamBlob {
            layer_sizes: self.shape.sizes.clone(),
            log_std_len: self.log_std.len(),
            params: self.flat_params(),
        }
    }

    pub fn from_blob(blob: ParamBlob) -> Result<Self> {
        let shape = MlpShape {
            sizes: blob.layer_sizes,
        };
        let n = shape.param_count();
        if blob.params.len() != n + blob.log_std_len {
            return Err(Error::Corrupt("policy blob length does not match its header".into()));
        }
        let mut params = blob.params;
        let log_std = params.split_off(n);
        // No clamp: stored values were clamped when written.
        Ok(Self {
            shape,
            mean_params: params,
            log_std,
        })
    }

    fn snapshot(&self) -> String {
        let non_finite = self.mean_params.iter().filter(|v| !v.is_finite()).count();
        let max_abs = self
            .mean_params
            .iter()
            .filter(|v| v.is_finite())
            .fold(0.0f64, |a, v| a.max(v.abs()));
        format!(
            "params={} non_finite={} max_abs={:.3e} log_std={:?}",
            self.mean_params.len(),
            non_finite,
            max_abs,
            self.log_std
        )
    }
}

pub(crate) fn gaussian_log_prob(mean: &[f64], log_std: &[f64], action: &[f64]) -> f64 {
    mean.iter()
        .zip(log_std)
        .zip(action)
        .map(|((m, l), a)| {
            let z = (a - m) / l.exp();
            -0.5 * z * z - l - LOG_SQRT_2PI
        })
        .sum()
}

/// Draws `a ~ N(mean(s), exp(log_std)^2)` and returns it with its exact log-density.
pub fn sample_action<R: Rng + ?Sized>(
    policy: &GaussianPolicy,
    state: &[f64],
    rng: &mut R,
) -> Result<(Vec<f64>, f64)> {
    let mean = policy.mean(state);
    if mean.iter().any(|m| !m.is_finite()) {
        return Err(Error::Numeric(format!(
            "policy produced a non-finite action mean ({})",
            policy.snapshot()
        )));
    }
    let mut action = Vec::with_capacity(mean.len());
    let mut log_prob = 0.0;
    for (m, l) in mean.iter().zip(&policy.log_std) {
        let z: f64 = StandardNormal.sample(rng);
        action.push(m + l.exp() * z);
        log_prob += -0.5 * z * z - l - LOG_SQRT_2PI;
    }
    Ok((action, log_prob))
}

/// State-value network with the same architecture family as the policy.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction {
    shape: MlpShape,
    params: Vec<f64>,
}

impl ValueFunction {
    pub fn new<R: Rng + ?Sized>(state_dim: usize, hidden: &[usize], rng: &mut R) -> Self {
        let shape = MlpShape::new(state_dim, hidden, 1);
        let params = shape.init(rng, 1.0);
        Self { shape, params }
    }

    pub fn value(&self, state: &[f64]) -> f64 {
        self.shape.output(&self.params, state)[0]
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn set_params(&mut self, params: &[f64]) {
        self.params.copy_from_slice(params);
    }

    pub(crate) fn shape(&self) -> &MlpShape {
        &self.shape
    }

    pub fn to_blob(&self) -> ParamBlob {
        ParamBlob {
            layer_sizes: self.shape.sizes.clone(),
            log_std_len: 0,
            params: self.params.clone(),
        }
    }

    pub fn from_blob(blob: ParamBlob) -> Result<Self> {
        let shape = MlpShape {
            sizes: blob.layer_sizes,
        };
        if blob.log_std_len != 0 || blob.params.len() != shape.param_count() {
            return Err(Error::Corrupt("value blob length does not match its header".into()));
        }
        Ok(Self {
            shape,
            params: blob.params,
        })
    }
}

// Networks travel through JSON as base64 parameter blobs.
impl Serialize for GaussianPolicy {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_blob().to_base64())
    }
}

impl<'de> Deserialize<'de> for GaussianPolicy {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        ParamBlob::from_base64(&text)
            .and_then(Self::from_blob)
            .map_err(serde::de::Error::custom)
    }
}

impl Serialize for ValueFunction {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_blob().to_base64())
    }
}

impl<'de> Deserialize<'de> for ValueFunction {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        ParamBlob::from_base64(&text)
            .and_then(Self::from_blob)
            .map_err(serde::de::Error::custom)
    }
}

/// Running per-dimension mean/variance of observations (Welford).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObsNormalizer {
    pub count: f64,
    pub mean: Vec<f64>,
    pub m2: Vec<f64>,
    pub frozen: bool,
}

const OBS_CLIP: f64 = 10.0;

impl ObsNormalizer {
    pub fn new(dim: usize) -> Self {
        Self {
            count: 0.0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
            frozen: false,
        }
    }

    pub fn observe(&mut self, x: &[f64]) {
        if self.frozen {
            return;
        }
        self.count += 1.0;
        for ((m, s), v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let delta = v - *m;
            *m += delta / self.count;
            *s += delta * (v - *m);
        }
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        if self.count < 2.0 {
            return x.iter().map(|v| v.clamp(-OBS_CLIP, OBS_CLIP)).collect();
        }
        x.iter()
            .zip(&self.mean)
            .zip(&self.m2)
            .map(|((v, m), s)| {
                let var = s / self.count;
                ((v - m) / (var + 1e-8).sqrt()).clamp(-OBS_CLIP, OBS_CLIP)
            })
            .collect()
    }
}
