//! Parallel optimization of a population of scalarized subproblems.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{EnvSpec, MoEnv};
use crate::error::{Error, Result};
use crate::pareto::ObjectiveVector;
use crate::policy::{
    compute_gae, ppo_update, sample_action, PpoConfig, PpoDiagnostics, RolloutBuffer, Transition,
};
use crate::task::{Archive, PolicyTask};
use crate::weights::{das_dennis, Scalarization};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MoppoConfig {
    pub ppo: PpoConfig,
    /// Environment steps per rollout (`t_r`).
    pub rollout_steps: usize,
    /// Rollout/update cycles per task in one generation.
    pub inner_iterations: usize,
    pub scalarization: Scalarization,
    /// Upper bound on tasks kept in cold storage.
    pub retired_cap: usize,
}

impl Default for MoppoConfig {
    fn default() -> Self {
        Self {
            ppo: PpoConfig::default(),
            rollout_steps: 480,
            inner_iterations: 4,
            scalarization: Scalarization::Linear,
            retired_cap: 64,
        }
    }
}

impl MoppoConfig {
    pub fn validate(&self) -> Result<()> {
        self.ppo.validate()?;
        if self.rollout_steps == 0 || self.inner_iterations == 0 {
            return Err(Error::Config(
                "rollout_steps and inner_iterations must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// How tasks of one generation are spread over threads. Results do not
/// depend on this setting because every task samples from its own stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Parallelism {
    #[default]
    Single,
    Workers(usize),
}

impl std::fmt::Display for Parallelism {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Parallelism::Single => write!(f, "single"),
            Parallelism::Workers(k) => write!(f, "workers:{k}"),
        }
    }
}

impl std::str::FromStr for Parallelism {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "single" {
            return Ok(Parallelism::Single);
        }
        match s.strip_prefix("workers:").map(str::parse::<usize>) {
            Some(Ok(k)) if k > 0 => Ok(Parallelism::Workers(k)),
            _ => Err(Error::Config(format!(
                "parallelism must be \"single\" or \"workers:<k>\", got {s:?}"
            ))),
        }
    }
}

impl Serialize for Parallelism {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Parallelism {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Runs per-task work either inline or on a dedicated thread pool.
pub struct Executor {
    pool: Option<rayon::ThreadPool>,
}

impl Executor {
    pub fn new(parallelism: Parallelism) -> Result<Self> {
        let pool = match parallelism {
            Parallelism::Single => None,
            Parallelism::Workers(k) => Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(k)
                    .build()
                    .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?,
            ),
        };
        Ok(Self { pool })
    }

    fn map_tasks<T, F>(&self, tasks: &mut [PolicyTask], f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(&mut PolicyTask) -> T + Sync + Send,
    {
        use rayon::prelude::*;
        match &self.pool {
            None => tasks.iter_mut().map(f).collect(),
            Some(pool) => pool.install(|| tasks.par_iter_mut().map(f).collect()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub buffer: RolloutBuffer,
    /// Mean undiscounted return over episodes completed in this rollout.
    pub objective_estimate: Option<ObjectiveVector>,
    pub scalarized_return: Option<f64>,
    pub episodes: usize,
}

/// Runs the task's policy for `t_r` steps from a fresh reset, resetting again
/// after every finished episode. A trailing partial episode is bootstrapped
/// from the value network.
pub fn collect_rollout(
    task: &mut PolicyTask,
    env: &mut dyn MoEnv,
    t_r: usize,
    scalarization: Scalarization,
) -> Result<Rollout> {
    if t_r == 0 {
        return Err(Error::Parameter("rollout length must be positive".into()));
    }
    let m = env.objective_count();
    let mut steps = Vec::with_capacity(t_r);
    let mut obs = env.reset();
    task.normalizer.observe(&obs);
    let mut state = task.normalizer.normalize(&obs);
    let mut ep_vec = vec![0.0; m];
    let mut ep_scalar = 0.0;
    let mut sum_vec = vec![0.0; m];
    let mut sum_scalar = 0.0;
    let mut episodes = 0usize;

    for k in 0..t_r {
        let (action, log_prob) = sample_action(&task.policy, &state, &mut task.rng)?;
        let value = task.value.value(&state);
        let out = env.step(&action).map_err(|e| Error::Environment {
            step: k,
            message: e.to_string(),
        })?;
        let scalar = scalarization.apply(&out.reward, &task.weight)?;
        for (acc, r) in ep_vec.iter_mut().zip(&out.reward) {
            *acc += r;
        }
        ep_scalar += scalar;
        steps.push(Transition {
            state,
            action,
            reward_vector: out.reward,
            scalarized_reward: scalar,
            log_prob,
            value,
            done: out.done,
        });
        if out.done {
            episodes += 1;
            for (s, e) in sum_vec.iter_mut().zip(ep_vec.iter_mut()) {
                *s += *e;
                *e = 0.0;
            }
            sum_scalar += ep_scalar;
            ep_scalar = 0.0;
            obs = env.reset();
        } else {
            obs = out.observation;
        }
        task.normalizer.observe(&obs);
        state = task.normalizer.normalize(&obs);
    }

    let last_done = steps.last().is_some_and(|t| t.done);
    let bootstrap_value = if last_done { 0.0 } else { task.value.value(&state) };
    task.env_steps += t_r as u64;
    let (objective_estimate, scalarized_return) = if episodes > 0 {
        let n = episodes as f64;
        let f = ObjectiveVector::new(sum_vec.iter().map(|s| s / n).collect())?;
        (Some(f), Some(sum_scalar / n))
    } else {
        (None, None)
    };
    Ok(Rollout {
        buffer: RolloutBuffer {
            steps,
            bootstrap_value,
        },
        objective_estimate,
        scalarized_return,
        episodes,
    })
}

/// `cycles` rounds of rollout, advantage estimation and clipped update.
/// Returns the number of environment steps simulated alongside the outcome.
pub fn train_task(
    task: &mut PolicyTask,
    env: &mut dyn MoEnv,
    cfg: &MoppoConfig,
    cycles: usize,
) -> (u64, Result<PpoDiagnostics>) {
    let mut steps = 0u64;
    let mut diag = PpoDiagnostics::default();
    for _ in 0..cycles {
        let rollout = match collect_rollout(task, env, cfg.rollout_steps, cfg.scalarization) {
            Ok(r) => r,
            Err(e) => {
                if let Error::Environment { step, .. } = &e {
                    steps += *step as u64 + 1;
                }
                return (steps, Err(e));
            }
        };
        steps += cfg.rollout_steps as u64;
        if let Some(f) = rollout.objective_estimate {
            task.objective_estimate = f;
        }
        if let Some(r) = rollout.scalarized_return {
            task.scalarized_return = r;
        }
        let result = compute_gae(&rollout.buffer, cfg.ppo.gamma, cfg.ppo.gae_lambda).and_then(|adv| {
            ppo_update(
                &mut task.policy,
                &mut task.value,
                &mut task.policy_opt,
                &mut task.value_opt,
                &rollout.buffer,
                &adv,
                &cfg.ppo,
                &mut task.rng,
            )
        });
        match result {
            Ok(d) => diag = d,
            Err(e) => return (steps, Err(e)),
        }
    }
    (steps, Ok(diag))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskFailure {
    pub task_id: u64,
    pub message: String,
}

/// Summary of one generation, suitable for the progress log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationReport {
    pub generation: u64,
    pub cycles: usize,
    pub env_steps: u64,
    /// `(task id, scalarized return)` for every task that trained.
    pub scalarized_returns: Vec<(u64, f64)>,
    pub failures: Vec<TaskFailure>,
    pub pruned: usize,
    pub archive_size: usize,
}

/// One generation: every task trains for `cycles` rollout/update rounds,
/// failed tasks are dropped, and the dominance filter is applied.
///
/// With `keep_all`, tasks retired by earlier filters are brought back first so
/// the full population keeps training.
pub fn run_generation(
    archive: &mut Archive,
    env: &EnvSpec,
    cfg: &MoppoConfig,
    cycles: usize,
    keep_all: bool,
    exec: &Executor,
) -> Result<GenerationReport> {
    if keep_all {
        archive.reactivate_all();
    }
    if archive.is_empty() {
        return Err(Error::EmptyInput("archive"));
    }
    let outcomes = exec.map_tasks(&mut archive.tasks, |task| match env.build() {
        Ok(mut e) => train_task(task, e.as_mut(), cfg, cycles),
        Err(err) => (0, Err(err)),
    });

    let mut steps = 0;
    let mut failures = Vec::new();
    let mut returns = Vec::new();
    let mut survivors = Vec::with_capacity(archive.tasks.len());
    for (task, (n, result)) in std::mem::take(&mut archive.tasks).into_iter().zip(outcomes) {
        steps += n;
        match result {
            Ok(_) => {
                returns.push((task.id, task.scalarized_return));
                survivors.push(task);
            }
            Err(e) => {
                log::warn!("task {} dropped: {e}", task.id);
                failures.push(TaskFailure {
                    task_id: task.id,
                    message: e.to_string(),
                });
            }
        }
    }
    archive.tasks = survivors;
    archive.env_steps += steps;
    archive.generation += 1;
    if archive.tasks.is_empty() {
        return Err(Error::State(format!(
            "every task failed in generation {}",
            archive.generation
        )));
    }
    let pruned = archive.prune(cfg.retired_cap)?;
    Ok(GenerationReport {
        generation: archive.generation,
        cycles,
        env_steps: steps,
        scalarized_returns: returns,
        failures,
        pruned,
        archive_size: archive.len(),
    })
}

/// Rollout/update cycles per task that spend `budget` steps over `tasks`
/// tasks as closely as possible; at least one.
pub fn cycles_for_budget(budget: u64, tasks: usize, t_r: usize) -> usize {
    let per_cycle = (tasks.max(1) * t_r) as f64;
    ((budget as f64 / per_cycle).round() as usize).max(1)
}

/// Splits `cycles` into generations of at most `inner_iterations` cycles each
/// and runs them, calling `on_generation` after each.
#[allow(clippy::too_many_arguments)]
pub fn run_cycles(
    archive: &mut Archive,
    env: &EnvSpec,
    cfg: &MoppoConfig,
    cycles: usize,
    keep_all: bool,
    exec: &Executor,
    mut on_generation: impl FnMut(&Archive, &GenerationReport) -> Result<()>,
) -> Result<()> {
    let mut left = cycles;
    while left > 0 {
        let now = left.min(cfg.inner_iterations);
        let report = run_generation(archive, env, cfg, now, keep_all, exec)?;
        on_generation(archive, &report)?;
        left -= now;
    }
    Ok(())
}

/// Builds one task per lattice weight with fresh random networks. Task seeds
/// are drawn from `rng`.
pub fn init_population<R: Rng + ?Sized>(
    m: usize,
    h: usize,
    env: &EnvSpec,
    hidden: &[usize],
    rng: &mut R,
) -> Result<Archive> {
    if env.objective_count() != m {
        return Err(Error::Config(format!(
            "environment has {} objectives, config says {m}",
            env.objective_count()
        )));
    }
    let probe = env.build()?;
    let mut archive = Archive::default();
    for w in das_dennis(m, h)? {
        let id = archive.take_id();
        archive.tasks.push(PolicyTask::new(
            id,
            w,
            probe.state_dim(),
            probe.action_dim(),
            hidden,
            rng.random(),
        ));
    }
    Ok(archive)
}

/// Preference-free warm-up: a lattice population trained until the seeding
/// budget is spent, then filtered.
#[allow(clippy::too_many_arguments)]
pub fn run_seeding<R: Rng + ?Sized>(
    m: usize,
    h: usize,
    env: &EnvSpec,
    seeding_steps: u64,
    cfg: &MoppoConfig,
    exec: &Executor,
    rng: &mut R,
    on_generation: impl FnMut(&Archive, &GenerationReport) -> Result<()>,
) -> Result<Archive> {
    if seeding_steps < cfg.rollout_steps as u64 {
        return Err(Error::Config(format!(
            "seeding budget {seeding_steps} is shorter than one rollout ({})",
            cfg.rollout_steps
        )));
    }
    let mut archive = init_population(m, h, env, &cfg.ppo.hidden, rng)?;
    let cycles = cycles_for_budget(seeding_steps, archive.len(), cfg.rollout_steps);
    run_cycles(&mut archive, env, cfg, cycles, true, exec, on_generation)?;
    Ok(archive)
}

/// Mean undiscounted return of `episodes` near-deterministic episodes
/// (log-std forced to its minimum). Leaves the task untouched.
pub fn evaluate(task: &PolicyTask, env: &mut dyn MoEnv, episodes: usize) -> Result<ObjectiveVector> {
    if episodes == 0 {
        return Err(Error::Parameter("need at least one evaluation episode".into()));
    }
    let mut policy = task.policy.clone();
    policy.set_log_std(crate::policy::LOG_STD_MIN);
    let mut rng = task.rng.clone();
    let mut total = vec![0.0; env.objective_count()];
    for _ in 0..episodes {
        let mut obs = env.reset();
        loop {
            let state = task.normalizer.normalize(&obs);
            let (action, _) = sample_action(&policy, &state, &mut rng)?;
            let out = env.step(&action)?;
            for (t, r) in total.iter_mut().zip(&out.reward) {
                *t += r;
            }
            if out.done {
                break;
            }
            obs = out.observation;
        }
    }
    ObjectiveVector::new(total.iter().map(|t| t / episodes as f64).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{PointMassEnv, PointMassParams};
    use crate::weights::WeightVector;

    fn small_cfg() -> MoppoConfig {
        MoppoConfig {
            ppo: PpoConfig {
                hidden: vec![8],
                epochs: 2,
                minibatch: 32,
                ..PpoConfig::default()
            },
            rollout_steps: 60,
            inner_iterations: 2,
            ..MoppoConfig::default()
        }
    }

    #[test]
    fn parallelism_parse() {
        assert_eq!("single".parse::<Parallelism>().unwrap(), Parallelism::Single);
        assert_eq!("workers:3".parse::<Parallelism>().unwrap(), Parallelism::Workers(3));
        assert!("workers:0".parse::<Parallelism>().is_err());
        assert!("many".parse::<Parallelism>().is_err());
        let text = serde_json::to_string(&Parallelism::Workers(2)).unwrap();
        assert_eq!(text, "\"workers:2\"");
    }

    #[test]
    fn rollout_shape_and_accounting() {
        let mut env = PointMassEnv::new(PointMassParams::default()).unwrap();
        let mut task = PolicyTask::new(0, WeightVector::uniform(2), 3, 2, &[8], 7);
        let r = collect_rollout(&mut task, &mut env, 50, Scalarization::Linear).unwrap();
        assert_eq!(r.buffer.len(), 50);
        assert_eq!(r.episodes, 2);
        assert_eq!(task.env_steps, 50);
        assert!(!r.buffer.steps[49].done);
        assert!(r.buffer.steps[19].done && r.buffer.steps[39].done);
        for t in &r.buffer.steps {
            let expect = 0.5 * t.reward_vector[0] + 0.5 * t.reward_vector[1];
            assert_eq!(t.scalarized_reward, expect);
        }
    }

    #[test]
    fn cycles_round_and_floor() {
        assert_eq!(cycles_for_budget(10_000, 6, 480), 3);
        assert_eq!(cycles_for_budget(1, 6, 480), 1);
        assert_eq!(cycles_for_budget(2880, 6, 480), 1);
    }

    #[test]
    fn generation_filters_and_counts_steps() {
        let env = EnvSpec::PointMass(PointMassParams::default());
        let cfg = small_cfg();
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(1);
        let mut archive = init_population(2, 5, &env, &cfg.ppo.hidden, &mut rng).unwrap();
        assert_eq!(archive.len(), 6);
        let exec = Executor::new(Parallelism::Single).unwrap();
        let report = run_generation(&mut archive, &env, &cfg, 2, true, &exec).unwrap();
        assert_eq!(report.env_steps, 6 * 2 * 60);
        assert_eq!(archive.env_steps, 720);
        assert_eq!(archive.generation, 1);
        assert!(archive.len() <= 6 && !archive.is_empty());
        let f = archive.objectives();
        for a in &f {
            for b in &f {
                assert!(!crate::pareto::dominates(a, b).unwrap());
            }
        }
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let env = EnvSpec::PointMass(PointMassParams::default());
        let cfg = small_cfg();
        let run = |p: Parallelism| {
            let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(5);
            let mut a = init_population(2, 3, &env, &cfg.ppo.hidden, &mut rng).unwrap();
            let exec = Executor::new(p).unwrap();
            run_generation(&mut a, &env, &cfg, 1, true, &exec).unwrap();
            a
        };
        assert_eq!(run(Parallelism::Single), run(Parallelism::Workers(3)));
    }

    #[test]
    fn evaluation_leaves_task_untouched() {
        let mut env = PointMassEnv::new(PointMassParams::default()).unwrap();
        let task = PolicyTask::new(0, WeightVector::uniform(2), 3, 2, &[8], 2);
        let before = task.clone();
        let a = evaluate(&task, &mut env, 2).unwrap();
        let b = evaluate(&task, &mut env, 2).unwrap();
        assert_eq!(a, b);
        assert_eq!(task, before);
    }
}
