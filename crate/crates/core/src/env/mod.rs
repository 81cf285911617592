//! Multi-objective environments.

pub mod mmsd;
pub mod pointmass;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub use mmsd::{MmsdEnv, MmsdParams, MmsdState, UtilityForm};
pub use pointmass::{PointMassEnv, PointMassParams};

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: Vec<f64>,
    pub reward: Vec<f64>,
    pub done: bool,
}

/// An episodic environment with a vector-valued reward.
pub trait MoEnv: Send {
    fn state_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn objective_count(&self) -> usize;
    fn reset(&mut self) -> Vec<f64>;
    fn step(&mut self, action: &[f64]) -> Result<StepOutcome>;
}

/// Environment selection as it appears in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", content = "params", rename_all = "kebab-case")]
pub enum EnvSpec {
    PointMass(PointMassParams),
    Mmsd(MmsdParams),
}

impl EnvSpec {
    pub fn build(&self) -> Result<Box<dyn MoEnv>> {
        Ok(match self {
            EnvSpec::PointMass(p) => Box::new(PointMassEnv::new(p.clone())?),
            EnvSpec::Mmsd(p) => Box::new(MmsdEnv::new(p.clone())?),
        })
    }

    pub fn objective_count(&self) -> usize {
        match self {
            EnvSpec::PointMass(_) => 2,
            EnvSpec::Mmsd(_) => 3,
        }
    }
}

/// One row of a debugging trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub t: usize,
    pub observation: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: Vec<f64>,
    pub done: bool,
}

/// Plays one episode, choosing actions with `act`, and records every step.
pub fn trace_episode(
    env: &mut dyn MoEnv,
    mut act: impl FnMut(&[f64]) -> Vec<f64>,
) -> Result<Vec<TraceStep>> {
    let mut obs = env.reset();
    let mut out = Vec::new();
    loop {
        let action = act(&obs);
        let step = env.step(&action)?;
        out.push(TraceStep {
            t: out.len(),
            observation: obs,
            action,
            reward: step.reward,
            done: step.done,
        });
        if step.done {
            return Ok(out);
        }
        obs = step.observation;
    }
}

/// Writes a trace as newline-delimited JSON.
pub fn write_trace<W: Write>(steps: &[TraceStep], mut out: W) -> Result<()> {
    for s in steps {
        serde_json::to_writer(&mut out, s).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
