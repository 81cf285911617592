use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::GpPreferenceModel;
use crate::error::{Error, Result};
use crate::task::PolicyTask;

/// Query counters: total queries, per-task counts, and the remaining number
/// of random warm-up queries.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QueryLedger {
    pub total_queries: u64,
    pub per_task: BTreeMap<u64, u64>,
    pub warmup_remaining: usize,
}

impl QueryLedger {
    pub fn new(warmup: usize) -> Self {
        Self {
            warmup_remaining: warmup,
            ..Self::default()
        }
    }

    pub fn count(&self, task_id: u64) -> u64 {
        self.per_task.get(&task_id).copied().unwrap_or(0)
    }

    fn record(&mut self, a: u64, b: u64) {
        self.total_queries += 1;
        *self.per_task.entry(a).or_default() += 1;
        *self.per_task.entry(b).or_default() += 1;
    }
}

/// `mu + alpha * sqrt(sigma2 * n / max(n_pi, 1))`, or `mu + alpha * sqrt(sigma2)`
/// before the first query.
pub fn information_value(mu: f64, sigma2: f64, n: u64, n_pi: u64, alpha: f64) -> f64 {
    let spread = if n == 0 {
        sigma2
    } else {
        sigma2 * n as f64 / n_pi.max(1) as f64
    };
    mu + alpha * spread.max(0.0).sqrt()
}

/// Upper-confidence style score of a task under the current model.
pub fn information(
    model: &GpPreferenceModel,
    ledger: &QueryLedger,
    task: &PolicyTask,
    alpha: f64,
) -> Result<f64> {
    let (mu, s2) = model.predict(task.objective_estimate.values())?;
    Ok(information_value(mu, s2, ledger.total_queries, ledger.count(task.id), alpha))
}

fn random_pair<R: Rng + ?Sized>(n: usize, rng: &mut R) -> (usize, usize) {
    let i = rng.random_range(0..n);
    let mut j = rng.random_range(0..n - 1);
    if j >= i {
        j += 1;
    }
    (i, j)
}

/// Picks the two tasks to show the decision maker and advances the counters.
///
/// While warm-up queries remain, or when no model exists yet, the pair is
/// uniformly random. Otherwise it is the top two by information, ties broken
/// by fewer past queries and then by position.
pub fn select_query_pair<R: Rng + ?Sized>(
    tasks: &mut [PolicyTask],
    model: Option<&GpPreferenceModel>,
    ledger: &mut QueryLedger,
    alpha: f64,
    rng: &mut R,
) -> Result<(usize, usize)> {
    let n = tasks.len();
    if n < 2 {
        return Err(Error::InsufficientCandidates(n));
    }
    let pair = match model {
        Some(model) if ledger.warmup_remaining == 0 => {
            let mut scored = tasks
                .iter()
                .enumerate()
                .map(|(i, t)| Ok((information(model, ledger, t, alpha)?, ledger.count(t.id), i)))
                .collect::<Result<Vec<_>>>()?;
            scored.sort_by(|x, y| {
                y.0.total_cmp(&x.0)
                    .then(x.1.cmp(&y.1))
                    .then(x.2.cmp(&y.2))
            });
            (scored[0].2, scored[1].2)
        }
        _ => {
            ledger.warmup_remaining = ledger.warmup_remaining.saturating_sub(1);
            random_pair(n, rng)
        }
    };
    ledger.record(tasks[pair.0].id, tasks[pair.1].id);
    tasks[pair.0].times_queried += 1;
    tasks[pair.1].times_queried += 1;
    Ok(pair)
}
