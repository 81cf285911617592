//! Multi-microgrid system design: a grid operator sets the power price and
//! the supply to storage-equipped microgrids. Three objectives: grid
//! utility, microgrid utility, and total stored energy at the end of the
//! episode.
//!
//! Default magnitudes (loads, utility coefficients, storage limits) are
//! declared here rather than taken from any published data set.

use serde::{Deserialize, Serialize};

use super::{MoEnv, StepOutcome};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UtilityForm {
    /// Saturated branch `w / alpha`, as written.
    #[default]
    Verbatim,
    /// Saturated branch `w^2 / (2 alpha)`, continuous at `p = w / alpha`.
    ContinuityCorrected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MmsdParams {
    pub microgrids: usize,
    pub storage_microgrids: usize,
    pub horizon: usize,
    /// Per-microgrid utility weight `w_i`.
    pub utility_weight: Vec<f64>,
    pub alpha: f64,
    /// Quadratic supply cost coefficient.
    pub beta: f64,
    /// Per-storage max change of stored energy per step.
    pub charge_rate: Vec<f64>,
    pub storage_min: Vec<f64>,
    pub storage_max: Vec<f64>,
    /// `base_load[i][t]`, one row per microgrid, `horizon` columns.
    pub base_load: Vec<Vec<f64>>,
    /// `generation[i][t]`, distributed generation per microgrid.
    pub generation: Vec<Vec<f64>>,
    pub lambda0: f64,
    pub supply0: Vec<f64>,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub supply_min: f64,
    pub supply_max: f64,
    pub max_price_delta: f64,
    pub max_supply_delta: f64,
    pub utility_form: UtilityForm,
}

impl Default for MmsdParams {
    fn default() -> Self {
        Self::with_size(3, 2, 24)
    }
}

impl MmsdParams {
    /// Default parameters for `n` microgrids, `n_s` with storage, horizon `t`.
    pub fn with_size(n: usize, n_s: usize, horizon: usize) -> Self {
        let base_load = (0..n)
            .map(|i| {
                let phase = 2.0 * std::f64::consts::PI * i as f64 / n.max(1) as f64;
                (0..horizon)
                    .map(|t| {
                        let angle = 2.0 * std::f64::consts::PI * t as f64 / horizon as f64;
                        10.0 * (1.0 + 0.2 * (angle + phase).sin())
                    })
                    .collect()
            })
            .collect();
        Self {
            microgrids: n,
            storage_microgrids: n_s,
            horizon,
            utility_weight: vec![4.0; n],
            alpha: 2.0,
            beta: 0.01,
            charge_rate: vec![2.0; n_s],
            storage_min: vec![0.0; n_s],
            storage_max: vec![10.0; n_s],
            base_load,
            generation: vec![vec![0.5; horizon]; n],
            lambda0: 2.0,
            supply0: vec![10.0; n],
            lambda_min: 0.5,
            lambda_max: 4.0,
            supply_min: 0.0,
            supply_max: 30.0,
            max_price_delta: 0.5,
            max_supply_delta: 1.0,
            utility_form: UtilityForm::Verbatim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.microgrids;
        let ns = self.storage_microgrids;
        let bad = |m: String| Err(Error::Parameter(m));
        if n == 0 || ns > n || self.horizon == 0 {
            return bad(format!("need 0 < n_s <= n and T > 0 (n={n}, n_s={ns}, T={})", self.horizon));
        }
        if self.utility_weight.len() != n || self.supply0.len() != n {
            return bad("utility weights and initial supplies need one entry per microgrid".into());
        }
        if self.charge_rate.len() != ns || self.storage_min.len() != ns || self.storage_max.len() != ns {
            return bad("storage parameters need one entry per storage microgrid".into());
        }
        if self.charge_rate.iter().any(|c| !(*c > 0.0)) {
            return bad("charge rates must be positive".into());
        }
        if self.storage_min.iter().zip(&self.storage_max).any(|(l, u)| !(l < u)) {
            return bad("storage lower bounds must be below upper bounds".into());
        }
        if self.base_load.len() != n || self.generation.len() != n {
            return bad("schedules need one row per microgrid".into());
        }
        if !(self.alpha > 0.0) || !(self.lambda_min < self.lambda_max) {
            return bad("need alpha > 0 and lambda_min < lambda_max".into());
        }
        Ok(())
    }

    /// Demand scaling `h_i(lambda)`. Microgrids beyond the third reuse the
    /// three published curves cyclically.
    pub fn demand_scale(i: usize, lambda: f64) -> f64 {
        match i % 3 {
            0 => 0.01 * lambda * lambda - 0.12 * lambda + 0.26,
            1 => -0.01 * lambda * lambda + 0.13,
            _ => -0.01 * lambda * lambda + 0.02 * lambda + 0.08,
        }
    }

    /// Consumer utility `U(p, w)`.
    pub fn utility(&self, demand: f64, w: f64) -> f64 {
        let knee = w / self.alpha;
        if demand >= knee {
            match self.utility_form {
                UtilityForm::Verbatim => w / self.alpha,
                UtilityForm::ContinuityCorrected => w * w / (2.0 * self.alpha),
            }
        } else {
            w * demand - self.alpha * demand * demand / 2.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmsdState {
    /// Current time step, 1-based.
    pub t: usize,
    pub supply: Vec<f64>,
    pub lambda: f64,
    pub storage: Vec<f64>,
    /// Demand at the most recent step.
    pub demand: Vec<f64>,
    pub grid_utility: f64,
    pub microgrid_utility: f64,
    pub finished: bool,
}

#[derive(Debug, Clone)]
pub struct MmsdEnv {
    params: MmsdParams,
    state: MmsdState,
}

impl MmsdEnv {
    pub fn new(params: MmsdParams) -> Result<Self> {
        params.validate()?;
        let state = Self::initial_state(&params);
        Ok(Self { params, state })
    }

    pub fn params(&self) -> &MmsdParams {
        &self.params
    }

    pub fn state(&self) -> &MmsdState {
        &self.state
    }

    fn initial_state(p: &MmsdParams) -> MmsdState {
        MmsdState {
            t: 1,
            supply: p.supply0.clone(),
            lambda: p.lambda0,
            storage: p
                .storage_min
                .iter()
                .zip(&p.storage_max)
                .map(|(l, u)| (l + u) / 2.0)
                .collect(),
            demand: vec![0.0; p.microgrids],
            grid_utility: 0.0,
            microgrid_utility: 0.0,
            finished: false,
        }
    }

    fn observe(&self) -> Vec<f64> {
        let mut obs = Vec::with_capacity(self.params.microgrids + 2);
        obs.push(self.state.t as f64);
        obs.extend_from_slice(&self.state.supply);
        obs.push(self.state.lambda);
        obs
    }
}

impl MoEnv for MmsdEnv {
    fn state_dim(&self) -> usize {
        self.params.microgrids + 2
    }

    fn action_dim(&self) -> usize {
        self.params.storage_microgrids + 1
    }

    fn objective_count(&self) -> usize {
        3
    }

    fn reset(&mut self) -> Vec<f64> {
        self.state = Self::initial_state(&self.params);
        self.observe()
    }

    fn step(&mut self, action: &[f64]) -> Result<StepOutcome> {
        let p = &self.params;
        let s = &mut self.state;
        let t = s.t;
        if s.finished || t > p.horizon {
            return Err(Error::Environment {
                step: t,
                message: "step called after the final time step".into(),
            });
        }
        if action.len() != p.storage_microgrids + 1 || action.iter().any(|a| !a.is_finite()) {
            return Err(Error::Environment {
                step: t,
                message: format!("bad action {action:?}"),
            });
        }
        let col = t - 1;
        for (i, row) in p.base_load.iter().chain(&p.generation).enumerate() {
            if row.len() <= col {
                return Err(Error::Environment {
                    step: t,
                    message: format!("schedule {i} has only {} entries", row.len()),
                });
            }
        }

        let d_price = action[0].clamp(-p.max_price_delta, p.max_price_delta);
        s.lambda = (s.lambda + d_price).clamp(p.lambda_min, p.lambda_max);
        for (i, a) in action[1..].iter().enumerate() {
            let d = a.clamp(-p.max_supply_delta, p.max_supply_delta);
            s.supply[i] = (s.supply[i] + d).clamp(p.supply_min, p.supply_max);
        }

        let lambda = s.lambda;
        let mut grid = 0.0;
        for i in 0..p.microgrids {
            let demand = (1.0 + MmsdParams::demand_scale(i, lambda)) * p.base_load[i][col];
            s.demand[i] = demand;
            grid += p.utility(demand, p.utility_weight[i]) - lambda * demand;
        }
        let total_supply: f64 = s.supply.iter().sum();
        let micro = lambda * total_supply - p.beta * total_supply * total_supply;

        for i in 0..p.storage_microgrids {
            let prev = s.storage[i];
            let raw = prev + s.supply[i] - s.demand[i] + p.generation[i][col];
            let c = p.charge_rate[i];
            let rate_limited = prev + (raw - prev).clamp(-c, c);
            s.storage[i] = rate_limited.clamp(p.storage_min[i], p.storage_max[i]);
        }

        s.grid_utility += grid;
        s.microgrid_utility += micro;
        let done = t == p.horizon;
        let stored = if done { s.storage.iter().sum() } else { 0.0 };
        if done {
            s.finished = true;
        } else {
            s.t += 1;
        }
        Ok(StepOutcome {
            observation: self.observe(),
            reward: vec![grid, micro, stored],
            done,
        })
    }
}
