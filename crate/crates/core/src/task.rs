//! Scalarized subproblems and the population that holds them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pareto::{nondominated_filter, ObjectiveVector};
use crate::policy::{Adam, GaussianPolicy, ObsNormalizer, ValueFunction};
use crate::weights::WeightVector;

/// A policy/value pair trained against one weight vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyTask {
    pub id: u64,
    pub policy: GaussianPolicy,
    pub value: ValueFunction,
    pub policy_opt: Adam,
    pub value_opt: Adam,
    pub normalizer: ObsNormalizer,
    pub weight: WeightVector,
    pub objective_estimate: ObjectiveVector,
    pub times_queried: u64,
    /// Environment steps this task has simulated.
    pub env_steps: u64,
    /// Mean scalarized episode return from the latest rollout.
    pub scalarized_return: f64,
    pub rng: ChaCha8Rng,
}

impl PolicyTask {
    /// Fresh random networks. `seed` fixes both the initialization and the
    /// task's private sampling stream.
    pub fn new(
        id: u64,
        weight: WeightVector,
        state_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let policy = GaussianPolicy::new(state_dim, action_dim, hidden, &mut rng);
        let value = ValueFunction::new(state_dim, hidden, &mut rng);
        let m = weight.len();
        Self {
            id,
            policy_opt: Adam::new(policy.param_count()),
            value_opt: Adam::new(value.params().len()),
            policy,
            value,
            normalizer: ObsNormalizer::new(state_dim),
            weight,
            objective_estimate: ObjectiveVector::zeros(m),
            times_queried: 0,
            env_steps: 0,
            scalarized_return: 0.0,
            rng,
        }
    }

    /// Copy of this task's networks and optimizer state under a new identity
    /// and weight. Query statistics start over; the sampling stream is reseeded.
    pub fn clone_as(&self, id: u64, weight: WeightVector, seed: u64) -> Self {
        Self {
            id,
            weight,
            times_queried: 0,
            env_steps: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            ..self.clone()
        }
    }
}

/// The working population plus cold storage for tasks the dominance filter
/// removed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Archive {
    pub tasks: Vec<PolicyTask>,
    pub retired: Vec<PolicyTask>,
    pub generation: u64,
    /// Sum over all tasks of environment steps actually simulated.
    pub env_steps: u64,
    pub next_id: u64,
}

impl Archive {
    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn objectives(&self) -> Vec<ObjectiveVector> {
        self.tasks.iter().map(|t| t.objective_estimate.clone()).collect()
    }

    pub fn take_id(&mut self) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    /// Moves dominated tasks to cold storage, keeping at most `retired_cap`
    /// of the most recently retired. Returns how many were moved.
    pub fn prune(&mut self, retired_cap: usize) -> Result<usize> {
        if self.tasks.is_empty() {
            return Err(Error::EmptyInput("archive"));
        }
        let keep = nondominated_filter(&self.objectives())?;
        let mut kept = Vec::with_capacity(keep.len());
        let mut dropped = Vec::new();
        let mut next = keep.iter().peekable();
        for (i, t) in std::mem::take(&mut self.tasks).into_iter().enumerate() {
            if next.peek() == Some(&&i) {
                next.next();
                kept.push(t);
            } else {
                dropped.push(t);
            }
        }
        let moved = dropped.len();
        self.tasks = kept;
        self.retired.extend(dropped);
        if self.retired.len() > retired_cap {
            let excess = self.retired.len() - retired_cap;
            self.retired.drain(..excess);
        }
        Ok(moved)
    }

    /// Returns every retired task to the working population, ordered by id.
    pub fn reactivate_all(&mut self) {
        self.tasks.append(&mut self.retired);
        self.tasks.sort_by_key(|t| t.id);
    }

    /// Brings back the most recently retired tasks until the population has
    /// at least `min` members or storage runs out.
    pub fn top_up(&mut self, min: usize) -> usize {
        let mut added = 0;
        while self.tasks.len() < min {
            match self.retired.pop() {
                Some(t) => {
                    self.tasks.push(t);
                    added += 1;
                }
                None => break,
            }
        }
        added
    }
}
