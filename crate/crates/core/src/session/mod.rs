//! The outer loop: seeding, then rounds of consultation, preference learning,
//! translation and optimization, with checkpointing and progress logging.

mod checkpoint;
mod config;
mod report;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_VERSION};
pub use config::{DmMode, SessionConfig};
pub use report::{archive_csv, metrics_table};

use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::golden::{epsilon_bar, epsilon_star};
use crate::moppo::{run_cycles, run_seeding, Executor, GenerationReport};
use crate::pareto::ObjectiveVector;
use crate::preference::{
    fit_map, select_query_pair, simulated_dm_compare, translate, ComparisonRecord,
    GpPreferenceModel, Outcome, QueryLedger, Source,
};
use crate::task::Archive;
use crate::weights::WeightVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Seeding,
    AwaitingFeedback,
    Optimizing,
    Finished,
}

/// Preference-guided run, or the no-preference control that keeps the
/// initial lattice weights throughout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    Preference,
    Baseline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingQuery {
    pub query_id: u64,
    pub round: usize,
    pub a_task: u64,
    pub b_task: u64,
    pub a: ObjectiveVector,
    pub b: ObjectiveVector,
}

/// One line of the progress log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub generation: u64,
    pub round: usize,
    pub phase: Phase,
    pub env_steps: u64,
    pub archive_size: usize,
    pub epsilon_star: Option<f64>,
    pub epsilon_bar: Option<f64>,
    pub scalarized_returns: Vec<(u64, f64)>,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub training_points: Vec<Vec<f64>>,
    pub utilities: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl From<&GpPreferenceModel> for ModelSummary {
    fn from(m: &GpPreferenceModel) -> Self {
        Self {
            training_points: m.training_points().to_vec(),
            utilities: m.utilities().to_vec(),
            iterations: m.iterations,
            converged: m.converged,
        }
    }
}

/// Everything needed to continue a session exactly where it stopped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub version: u32,
    pub config: SessionConfig,
    pub mode: RunMode,
    pub phase: Phase,
    pub archive: Archive,
    pub comparisons: Vec<ComparisonRecord>,
    pub ledger: QueryLedger,
    pub rounds_completed: usize,
    pub pending: Option<PendingQuery>,
    pub next_query_id: u64,
    pub metrics: Vec<MetricsRecord>,
    pub model: Option<ModelSummary>,
    pub rng: ChaCha8Rng,
}

impl SessionState {
    pub fn new(config: SessionConfig, mode: RunMode) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            version: CHECKPOINT_VERSION,
            mode,
            phase: Phase::Seeding,
            archive: Archive::default(),
            comparisons: Vec::new(),
            ledger: QueryLedger::new(config.tau),
            rounds_completed: 0,
            pending: None,
            next_query_id: 0,
            metrics: Vec::new(),
            model: None,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            config,
        })
    }

    pub fn objectives(&self) -> Vec<ObjectiveVector> {
        self.archive.objectives()
    }

    pub fn weights(&self) -> Vec<WeightVector> {
        self.archive.tasks.iter().map(|t| t.weight.clone()).collect()
    }

    /// `(epsilon_star, epsilon_bar)` of the current archive, when a golden
    /// target is configured.
    pub fn epsilons(&self) -> Option<(f64, f64)> {
        epsilons(&self.archive, &self.config)
    }
}

fn epsilons(archive: &Archive, config: &SessionConfig) -> Option<(f64, f64)> {
    let g = config.dm_mode.golden()?;
    let f = archive.objectives();
    Some((epsilon_star(&f, g).ok()?, epsilon_bar(&f, g).ok()?))
}

/// A running session: state plus the worker pool and optional progress log.
pub struct Session {
    state: SessionState,
    exec: Executor,
    log: Option<Box<dyn Write + Send>>,
}

impl std::fmt::Debug for Session {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Session").field("state", &self.state).finish_non_exhaustive()
    }
}

impl Session {
    pub fn new(config: SessionConfig, mode: RunMode) -> Result<Self> {
        Self::from_state(SessionState::new(config, mode)?)
    }

    pub fn from_state(state: SessionState) -> Result<Self> {
        state.config.validate()?;
        let exec = Executor::new(state.config.parallelism)?;
        Ok(Self {
            state,
            exec,
            log: None,
        })
    }

    /// Appends one JSON line per generation to `out`.
    pub fn with_log(mut self, out: Box<dyn Write + Send>) -> Self {
        self.log = Some(out);
        self
    }

    pub fn state(&self) -> &SessionState {
        &self.state
    }

    pub fn into_state(self) -> SessionState {
        self.state
    }

    pub fn phase(&self) -> Phase {
        self.state.phase
    }

    pub fn pending_query(&self) -> Option<&PendingQuery> {
        self.state.pending.as_ref()
    }

    /// Performs the next block of computation: the seeding stage or one
    /// round of optimization. Does nothing while feedback is awaited or after
    /// the session has finished.
    pub fn advance(&mut self) -> Result<Phase> {
        match self.state.phase {
            Phase::Seeding => self.seed_population()?,
            Phase::Optimizing => self.optimize_round()?,
            Phase::AwaitingFeedback | Phase::Finished => {}
        }
        Ok(self.state.phase)
    }

    fn seed_population(&mut self) -> Result<()> {
        let SessionState {
            config, metrics, rng, ..
        } = &mut self.state;
        let cfg = &*config;
        let log = &mut self.log;
        let archive = run_seeding(
            cfg.m,
            cfg.h,
            &cfg.env,
            cfg.seeding_steps,
            &cfg.moppo,
            &self.exec,
            rng,
            |a, r| record_generation(metrics, log, cfg, a, r, 0, Phase::Seeding),
        )?;
        self.state.archive = archive;
        match self.state.mode {
            RunMode::Baseline => self.state.phase = Phase::Optimizing,
            RunMode::Preference => self.prepare_query()?,
        }
        Ok(())
    }

    fn optimize_round(&mut self) -> Result<()> {
        let rounds_left = match self.state.mode {
            RunMode::Preference => self.state.config.interactions_budget - self.state.rounds_completed,
            RunMode::Baseline => 1,
        };
        let remaining = self
            .state
            .config
            .total_steps
            .saturating_sub(self.state.archive.env_steps);
        let budget = remaining / rounds_left as u64;
        let keep_all = self.state.mode == RunMode::Baseline;
        let round = self.state.rounds_completed + 1;
        // Generation sizes are recomputed as the filter shrinks the archive,
        // so the round lands within half a cycle of its share.
        let target = self.state.archive.env_steps + budget;
        let t_r = self.state.config.moppo.rollout_steps;
        loop {
            let SessionState {
                config, archive, metrics, ..
            } = &mut self.state;
            let cfg = &*config;
            let population = archive.len() + if keep_all { archive.retired.len() } else { 0 };
            let left = target.saturating_sub(archive.env_steps);
            let cycles = (left as f64 / (population * t_r) as f64).round() as usize;
            if cycles == 0 {
                break;
            }
            let log = &mut self.log;
            run_cycles(
                archive,
                &cfg.env,
                &cfg.moppo,
                cycles.min(cfg.moppo.inner_iterations),
                keep_all,
                &self.exec,
                |a, r| record_generation(metrics, log, cfg, a, r, round, Phase::Optimizing),
            )?;
        }
        self.state.rounds_completed += 1;
        let done = match self.state.mode {
            RunMode::Baseline => true,
            RunMode::Preference => self.state.rounds_completed >= self.state.config.interactions_budget,
        };
        if done {
            self.state.phase = Phase::Finished;
        } else {
            self.prepare_query()?;
        }
        Ok(())
    }

    fn fit_model(&self) -> Option<GpPreferenceModel> {
        if !self.state.comparisons.iter().any(|c| c.outcome != Outcome::Indifferent) {
            return None;
        }
        match fit_map(&self.state.comparisons, self.state.config.kernel) {
            Ok(m) => Some(m),
            Err(e) => {
                log::warn!("preference model fit failed: {e}");
                None
            }
        }
    }

    fn prepare_query(&mut self) -> Result<()> {
        let archive = &mut self.state.archive;
        archive.top_up(2);
        if archive.len() < 2 {
            // A lone survivor is paired with a copy of itself under the
            // uniform weight so a query can still be posed.
            let id = archive.take_id();
            let seed = rand::Rng::random(&mut self.state.rng);
            let m = self.state.config.m;
            let clone = archive.tasks[0].clone_as(id, WeightVector::uniform(m), seed);
            archive.tasks.push(clone);
        }
        let model = self.fit_model();
        let alpha = self.state.config.alpha;
        let SessionState {
            archive,
            ledger,
            rng,
            next_query_id,
            rounds_completed,
            ..
        } = &mut self.state;
        let (i, j) = select_query_pair(&mut archive.tasks, model.as_ref(), ledger, alpha, rng)?;
        let (a, b) = (&archive.tasks[i], &archive.tasks[j]);
        let pending = PendingQuery {
            query_id: *next_query_id,
            round: *rounds_completed + 1,
            a_task: a.id,
            b_task: b.id,
            a: a.objective_estimate.clone(),
            b: b.objective_estimate.clone(),
        };
        self.state.pending = Some(pending);
        self.state.next_query_id += 1;
        self.state.phase = Phase::AwaitingFeedback;
        Ok(())
    }

    /// Records the verdict on the pending query, refits the preference model
    /// and rebuilds the population from it.
    pub fn submit_feedback(&mut self, query_id: u64, outcome: Outcome, source: Source) -> Result<()> {
        let pending = match &self.state.pending {
            Some(p) if p.query_id == query_id && self.state.phase == Phase::AwaitingFeedback => p.clone(),
            _ if query_id < self.state.next_query_id => return Err(Error::QueryAnswered(query_id)),
            _ => return Err(Error::UnknownQuery(query_id)),
        };
        let mut record = ComparisonRecord::new(pending.a, pending.b, outcome);
        record.generation = self.state.archive.generation;
        record.source = source;
        record.a_task = Some(pending.a_task);
        record.b_task = Some(pending.b_task);
        self.state.comparisons.push(record);

        if let Some(model) = self.fit_model() {
            let tcfg = self.state.config.translate_config();
            let SessionState {
                archive, rng, ..
            } = &mut self.state;
            let t = translate(&archive.tasks, &model, &tcfg, &mut archive.next_id, rng)?;
            archive.tasks = t.tasks;
            self.state.model = Some(ModelSummary::from(&model));
        }
        self.state.pending = None;
        self.state.phase = Phase::Optimizing;
        Ok(())
    }

    /// Ends the session at once; later calls to [`Self::advance`] do nothing.
    pub fn stop(&mut self) {
        self.state.pending = None;
        self.state.phase = Phase::Finished;
    }

    /// Drives the session to the end, answering every query with `answer`.
    pub fn run_with(&mut self, mut answer: impl FnMut(&PendingQuery) -> (Outcome, Source)) -> Result<()> {
        loop {
            match self.state.phase {
                Phase::Finished => return Ok(()),
                Phase::AwaitingFeedback => {
                    let q = self.state.pending.clone().expect("pending query while awaiting feedback");
                    let (outcome, source) = answer(&q);
                    self.submit_feedback(q.query_id, outcome, source)?;
                }
                _ => {
                    self.advance()?;
                }
            }
        }
    }

    /// Drives the session to the end with the configured simulated decision maker.
    pub fn run_simulated(&mut self) -> Result<()> {
        let golden = match &self.state.config.dm_mode {
            DmMode::Simulated { golden } => golden.clone(),
            DmMode::Interactive { .. } => {
                return Err(Error::State(
                    "interactive sessions need answers from outside".into(),
                ))
            }
        };
        self.run_with(|q| (simulated_dm_compare(&golden, &q.a, &q.b), Source::Simulated))
    }
}

fn record_generation(
    metrics: &mut Vec<MetricsRecord>,
    log: &mut Option<Box<dyn Write + Send>>,
    cfg: &SessionConfig,
    archive: &Archive,
    report: &GenerationReport,
    round: usize,
    phase: Phase,
) -> Result<()> {
    let eps = epsilons(archive, cfg);
    let rec = MetricsRecord {
        generation: report.generation,
        round,
        phase,
        env_steps: archive.env_steps,
        archive_size: archive.len(),
        epsilon_star: eps.map(|e| e.0),
        epsilon_bar: eps.map(|e| e.1),
        scalarized_returns: report.scalarized_returns.clone(),
        failures: report.failures.len(),
    };
    if let Some(out) = log {
        serde_json::to_writer(&mut *out, &rec).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
        out.flush()?;
    }
    metrics.push(rec);
    Ok(())
}

/// Runs to completion; on failure the last consistent state is written to
/// `checkpoint` (when given) before the error is returned.
pub fn run_to_completion(mut session: Session, checkpoint: Option<&Path>) -> Result<SessionState> {
    let before = session.state.clone();
    match session.run_simulated() {
        Ok(()) => Ok(session.into_state()),
        Err(e) => {
            if let Some(path) = checkpoint {
                // The live state may be mid-update; the last boundary is safe.
                let state = if session.state.phase == Phase::Finished {
                    &session.state
                } else {
                    &before
                };
                if let Err(save_err) = save_checkpoint(state, path) {
                    log::error!("could not write checkpoint after failure: {save_err}");
                }
            }
            Err(e)
        }
    }
}

/// Preference-guided run with the simulated decision maker.
pub fn run_session(config: SessionConfig) -> Result<SessionState> {
    let mut s = Session::new(config, RunMode::Preference)?;
    s.run_simulated()?;
    Ok(s.into_state())
}

/// The no-preference control: same budget, lattice weights throughout.
pub fn run_baseline(config: SessionConfig) -> Result<SessionState> {
    let mut s = Session::new(config, RunMode::Baseline)?;
    s.run_simulated()?;
    Ok(s.into_state())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::golden::GoldenSpec;
    use crate::policy::PpoConfig;

    pub(crate) fn tiny_config() -> SessionConfig {
        let mut cfg = SessionConfig::example();
        cfg.seeding_steps = 1_200;
        cfg.total_steps = 6_000;
        cfg.interactions_budget = 4;
        cfg.h = 3;
        cfg.moppo.rollout_steps = 100;
        cfg.moppo.inner_iterations = 2;
        cfg.moppo.ppo = PpoConfig {
            hidden: vec![8],
            epochs: 2,
            ..PpoConfig::default()
        };
        cfg
    }

    #[test]
    fn phases_and_comparison_count() {
        let mut s = Session::new(tiny_config(), RunMode::Preference).unwrap();
        assert_eq!(s.phase(), Phase::Seeding);
        assert!(s.pending_query().is_none());
        assert_eq!(s.advance().unwrap(), Phase::AwaitingFeedback);
        // advancing without an answer changes nothing
        assert_eq!(s.advance().unwrap(), Phase::AwaitingFeedback);
        let q = s.pending_query().unwrap().clone();
        assert_ne!(q.a_task, q.b_task);
        s.submit_feedback(q.query_id, Outcome::ABetter, Source::Human).unwrap();
        assert_eq!(s.phase(), Phase::Optimizing);
        assert!(matches!(
            s.submit_feedback(q.query_id, Outcome::ABetter, Source::Human),
            Err(Error::QueryAnswered(_))
        ));
        assert!(matches!(
            s.submit_feedback(99, Outcome::ABetter, Source::Human),
            Err(Error::UnknownQuery(99))
        ));
        s.run_simulated().unwrap();
        let st = s.state();
        assert_eq!(st.phase, Phase::Finished);
        assert_eq!(st.comparisons.len(), 4);
        assert_eq!(st.rounds_completed, 4);
        assert_eq!(st.ledger.total_queries, 4);
        // generations are numbered without gaps
        for (i, m) in st.metrics.iter().enumerate() {
            assert_eq!(m.generation, i as u64 + 1);
        }
        assert_eq!(s.advance().unwrap(), Phase::Finished);
    }

    #[test]
    fn step_budget_is_respected() {
        let cfg = tiny_config();
        let st = run_session(cfg.clone()).unwrap();
        let slack = (st.archive.len().max(cfg.population_size()) * cfg.moppo.rollout_steps) as u64;
        assert!(st.archive.env_steps.abs_diff(cfg.total_steps) <= slack, "{}", st.archive.env_steps);
        let base = run_baseline(cfg.clone()).unwrap();
        assert!(base.archive.env_steps.abs_diff(cfg.total_steps) <= slack);
        assert!(base.comparisons.is_empty());
    }

    #[test]
    fn indifferent_dm_never_fits() {
        let mut cfg = tiny_config();
        cfg.dm_mode = DmMode::Simulated {
            golden: GoldenSpec::axis(0, 2.0).with_tolerance(f64::INFINITY),
        };
        let st = run_session(cfg).unwrap();
        assert_eq!(st.comparisons.len(), 4);
        assert!(st.comparisons.iter().all(|c| c.outcome == Outcome::Indifferent));
        assert!(st.model.is_none());
    }

    #[test]
    fn stop_finishes() {
        let mut s = Session::new(tiny_config(), RunMode::Preference).unwrap();
        s.advance().unwrap();
        s.stop();
        assert_eq!(s.phase(), Phase::Finished);
        assert!(s.pending_query().is_none());
        assert_eq!(s.advance().unwrap(), Phase::Finished);
    }

    #[test]
    fn interactive_mode_refuses_simulated_driver() {
        let mut cfg = tiny_config();
        cfg.dm_mode = DmMode::Interactive {
            feedback_timeout_secs: None,
            golden: None,
        };
        let mut s = Session::new(cfg, RunMode::Preference).unwrap();
        assert!(matches!(s.run_simulated(), Err(Error::State(_))));
    }
}
