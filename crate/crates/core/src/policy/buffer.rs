use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One environment step as seen by the learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    /// Observation after normalization, exactly as fed to the networks.
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward_vector: Vec<f64>,
    pub scalarized_reward: f64,
    pub log_prob: f64,
    pub value: f64,
    pub done: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RolloutBuffer {
    pub steps: Vec<Transition>,
    /// Value of the state following the final step, used when the buffer
    /// ends mid-episode. Ignored when the final step is terminal.
    pub bootstrap_value: f64,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Advantages {
    /// Raw (un-normalized) generalized advantage estimates.
    pub advantages: Vec<f64>,
    /// Regression targets for the value function: advantage + value.
    pub returns: Vec<f64>,
}

/// Generalized advantage estimation over the scalarized rewards:
/// `A_t = sum_k (gamma lambda)^k delta_{t+k}`, truncated at episode ends, with
/// `delta_t = r_t + gamma V(s_{t+1}) (1 - done_t) - V(s_t)`.
pub fn compute_gae(buf: &RolloutBuffer, gamma: f64, lambda: f64) -> Result<Advantages> {
    if buf.is_empty() {
        return Err(Error::EmptyInput("rollout buffer"));
    }
    if !(gamma > 0.0 && gamma <= 1.0) || !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Parameter(format!(
            "need gamma in (0, 1] and lambda in [0, 1], got {gamma}, {lambda}"
        )));
    }
    let n = buf.len();
    let mut advantages = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let step = &buf.steps[t];
        let next_value = if t + 1 < n {
            buf.steps[t + 1].value
        } else {
            buf.bootstrap_value
        };
        let live = if step.done { 0.0 } else { 1.0 };
        let delta = step.scalarized_reward + gamma * next_value * live - step.value;
        running = delta + gamma * lambda * live * running;
        advantages[t] = running;
    }
    let returns = advantages
        .iter()
        .zip(&buf.steps)
        .map(|(a, s)| a + s.value)
        .collect();
    Ok(Advantages {
        advantages,
        returns,
    })
}
