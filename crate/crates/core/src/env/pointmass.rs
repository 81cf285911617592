//! Two-objective point mass: the agent moves in the plane and is rewarded
//! for getting closer to target A (objective 1) and target B (objective 2).

use serde::{Deserialize, Serialize};

use super::{MoEnv, StepOutcome};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PointMassParams {
    pub target_a: [f64; 2],
    pub target_b: [f64; 2],
    pub start: [f64; 2],
    pub step_size: f64,
    pub episode_length: usize,
    /// Actions are projected onto the disc of this radius.
    pub action_bound: f64,
}

impl Default for PointMassParams {
    fn default() -> Self {
        Self {
            target_a: [3.0, 0.0],
            target_b: [0.0, 3.0],
            start: [0.0, 0.0],
            step_size: 0.1,
            episode_length: 20,
            action_bound: 1.0,
        }
    }
}

impl PointMassParams {
    /// Largest achievable return on objective 1 (head straight for A).
    pub fn max_progress(&self) -> f64 {
        let d = dist(self.start, self.target_a);
        d.min(self.step_size * self.action_bound * self.episode_length as f64)
    }
}

fn dist(p: [f64; 2], q: [f64; 2]) -> f64 {
    ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
}

#[derive(Debug, Clone)]
pub struct PointMassEnv {
    params: PointMassParams,
    pos: [f64; 2],
    t: usize,
}

impl PointMassEnv {
    pub fn new(params: PointMassParams) -> Result<Self> {
        if params.target_a == params.target_b {
            return Err(Error::Parameter("point-mass targets must differ".into()));
        }
        if params.episode_length == 0 || !(params.step_size > 0.0) || !(params.action_bound > 0.0) {
            return Err(Error::Parameter(
                "point-mass needs positive episode length, step size and action bound".into(),
            ));
        }
        let pos = params.start;
        Ok(Self { params, pos, t: 0 })
    }

    pub fn position(&self) -> [f64; 2] {
        self.pos
    }

    fn observe(&self) -> Vec<f64> {
        let remaining = 1.0 - self.t as f64 / self.params.episode_length as f64;
        vec![self.pos[0], self.pos[1], remaining]
    }
}

impl MoEnv for PointMassEnv {
    fn state_dim(&self) -> usize {
        3
    }

    fn action_dim(&self) -> usize {
        2
    }

    fn objective_count(&self) -> usize {
        2
    }

    fn reset(&mut self) -> Vec<f64> {
        self.pos = self.params.start;
        self.t = 0;
        self.observe()
    }

    fn step(&mut self, action: &[f64]) -> Result<StepOutcome> {
        if self.t >= self.params.episode_length {
            return Err(Error::Environment {
                step: self.t,
                message: "step called on a finished episode".into(),
            });
        }
        if action.len() != 2 || action.iter().any(|a| !a.is_finite()) {
            return Err(Error::Environment {
                step: self.t,
                message: format!("bad action {action:?}"),
            });
        }
        let norm = (action[0] * action[0] + action[1] * action[1]).sqrt();
        let k = if norm > self.params.action_bound {
            self.params.action_bound / norm
        } else {
            1.0
        };
        let before = self.pos;
        self.pos[0] += self.params.step_size * action[0] * k;
        self.pos[1] += self.params.step_size * action[1] * k;
        let reward = vec![
            dist(before, self.params.target_a) - dist(self.pos, self.params.target_a),
            dist(before, self.params.target_b) - dist(self.pos, self.params.target_b),
        ];
        self.t += 1;
        Ok(StepOutcome {
            observation: self.observe(),
            reward,
            done: self.t == self.params.episode_length,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conflicting_objectives() {
        let params = PointMassParams {
            target_a: [2.0, 0.0],
            target_b: [-2.0, 0.0],
            ..PointMassParams::default()
        };
        let mut env = PointMassEnv::new(params).unwrap();
        env.reset();
        let out = env.step(&[1.0, 0.0]).unwrap();
        assert!(out.reward[0] > 0.0);
        assert!(out.reward[1] < 0.0);
    }

    #[test]
    fn zero_action_zero_reward() {
        let mut env = PointMassEnv::new(PointMassParams::default()).unwrap();
        env.reset();
        assert_eq!(env.step(&[0.0, 0.0]).unwrap().reward, vec![0.0, 0.0]);
    }

    #[test]
    fn straight_line_return_telescopes() {
        let params = PointMassParams::default();
        let mut env = PointMassEnv::new(params.clone()).unwrap();
        env.reset();
        let mut total = [0.0, 0.0];
        loop {
            let out = env.step(&[0.6, 0.8]).unwrap();
            total[0] += out.reward[0];
            total[1] += out.reward[1];
            if out.done {
                break;
            }
        }
        // Closed form: 20 steps of length 0.1 along (0.6, 0.8) from the origin.
        let end: [f64; 2] = [0.6 * 2.0, 0.8 * 2.0];
        let expect_a = 3.0 - ((3.0 - end[0]).powi(2) + end[1].powi(2)).sqrt();
        let expect_b = 3.0 - (end[0].powi(2) + (3.0 - end[1]).powi(2)).sqrt();
        assert!((total[0] - expect_a).abs() < 1e-9);
        assert!((total[1] - expect_b).abs() < 1e-9);
    }

    #[test]
    fn action_is_clamped_and_episode_ends() {
        let mut env = PointMassEnv::new(PointMassParams::default()).unwrap();
        env.reset();
        env.step(&[30.0, 40.0]).unwrap();
        let p = env.position();
        assert!((p[0] - 0.06).abs() < 1e-12 && (p[1] - 0.08).abs() < 1e-12);
        for _ in 1..20 {
            env.step(&[0.0, 0.0]).unwrap();
        }
        assert!(matches!(env.step(&[0.0, 0.0]), Err(Error::Environment { step: 20, .. })));
    }

    #[test]
    fn rejects_identical_targets() {
        let params = PointMassParams {
            target_b: [3.0, 0.0],
            ..PointMassParams::default()
        };
        assert!(PointMassEnv::new(params).is_err());
    }
}
