use serde::{Deserialize, Serialize};

use crate::env::EnvSpec;
use crate::error::{Error, Result};
use crate::golden::GoldenSpec;
use crate::moppo::{MoppoConfig, Parallelism};
use crate::preference::{KernelParams, TranslateConfig};
use crate::weights::{lattice_size, Scalarization};

/// Who answers the pairwise queries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum DmMode {
    /// An oracle answers from a golden target.
    Simulated { golden: GoldenSpec },
    /// Answers arrive from outside (HTTP or a scripted client).
    Interactive {
        /// Seconds to wait for a verdict before recording indifference.
        #[serde(default)]
        feedback_timeout_secs: Option<f64>,
        /// Optional target, used only for metrics.
        #[serde(default)]
        golden: Option<GoldenSpec>,
    },
}

impl DmMode {
    pub fn golden(&self) -> Option<&GoldenSpec> {
        match self {
            DmMode::Simulated { golden } => Some(golden),
            DmMode::Interactive { golden, .. } => golden.as_ref(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionConfig {
    pub env: EnvSpec,
    pub m: usize,
    /// Lattice divisions per axis for the initial population.
    pub h: usize,
    pub seeding_steps: u64,
    pub total_steps: u64,
    #[serde(default = "defaults::interactions")]
    pub interactions_budget: usize,
    #[serde(default = "defaults::tau")]
    pub tau: usize,
    #[serde(default = "defaults::one")]
    pub alpha: f64,
    #[serde(default = "defaults::one")]
    pub beta: f64,
    #[serde(default = "defaults::eta")]
    pub eta: f64,
    #[serde(default = "defaults::kappa1")]
    pub kappa1_frac: f64,
    #[serde(default = "defaults::kappa2")]
    pub kappa2_frac: f64,
    /// The translation lattice has at least this many times the initial
    /// population size.
    #[serde(default = "defaults::n_tilde")]
    pub n_tilde_factor: f64,
    #[serde(default)]
    pub scalarization: Scalarization,
    pub dm_mode: DmMode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub parallelism: Parallelism,
    #[serde(default)]
    pub moppo: MoppoConfig,
    #[serde(default)]
    pub kernel: KernelParams,
}

mod defaults {
    pub fn interactions() -> usize {
        40
    }
    pub fn tau() -> usize {
        3
    }
    pub fn one() -> f64 {
        1.0
    }
    pub fn eta() -> f64 {
        0.5
    }
    pub fn kappa1() -> f64 {
        0.8
    }
    pub fn kappa2() -> f64 {
        0.2
    }
    pub fn n_tilde() -> f64 {
        2.0
    }
}

impl SessionConfig {
    /// A point-mass setup preferring the first objective, sized for quick runs.
    pub fn example() -> Self {
        let env = crate::env::PointMassParams::default();
        let target = env.max_progress();
        Self {
            env: EnvSpec::PointMass(env),
            m: 2,
            h: 5,
            seeding_steps: 20_000,
            total_steps: 200_000,
            interactions_budget: 10,
            tau: 3,
            alpha: 1.0,
            beta: 1.0,
            eta: 0.5,
            kappa1_frac: 0.8,
            kappa2_frac: 0.2,
            n_tilde_factor: 2.0,
            scalarization: Scalarization::Linear,
            dm_mode: DmMode::Simulated {
                golden: GoldenSpec::axis(0, target),
            },
            seed: 0,
            parallelism: Parallelism::Single,
            moppo: MoppoConfig::default(),
            kernel: KernelParams::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.m < 2 {
            return bad(format!("need at least two objectives, got {}", self.m));
        }
        if self.env.objective_count() != self.m {
            return bad(format!(
                "environment has {} objectives but m = {}",
                self.env.objective_count(),
                self.m
            ));
        }
        if self.h == 0 {
            return bad("h must be at least 1".into());
        }
        if self.seeding_steps >= self.total_steps {
            return bad(format!(
                "seeding_steps ({}) must be below total_steps ({})",
                self.seeding_steps, self.total_steps
            ));
        }
        if self.seeding_steps < self.moppo.rollout_steps as u64 {
            return bad("seeding_steps must cover at least one rollout".into());
        }
        if self.interactions_budget == 0 {
            return bad("interactions_budget must be at least 1".into());
        }
        if !(self.kappa1_frac > 0.0 && self.kappa1_frac <= 1.0)
            || !(0.0..=1.0).contains(&self.kappa2_frac)
            || self.kappa1_frac + self.kappa2_frac > 1.0 + 1e-9
        {
            return bad(format!(
                "need kappa1_frac in (0, 1], kappa2_frac in [0, 1] and a sum at most 1 (got {}, {})",
                self.kappa1_frac, self.kappa2_frac
            ));
        }
        if !(self.alpha > 0.0) || !(self.beta >= 0.0) {
            return bad("alpha must be positive and beta non-negative".into());
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return bad(format!("eta {} outside [0, 1]", self.eta));
        }
        if !(self.n_tilde_factor >= 1.0) {
            return bad("n_tilde_factor must be at least 1".into());
        }
        if let DmMode::Interactive {
            feedback_timeout_secs: Some(t),
            ..
        } = &self.dm_mode
        {
            if !(*t > 0.0) {
                return bad("feedback timeout must be positive".into());
            }
        }
        if let Some(g) = self.dm_mode.golden() {
            g.validate(self.m).map_err(|e| Error::Config(e.to_string()))?;
        }
        self.moppo.validate()?;
        self.env.build()?;
        Ok(())
    }

    pub fn population_size(&self) -> usize {
        lattice_size(self.m, self.h)
    }

    pub fn translate_config(&self) -> TranslateConfig {
        TranslateConfig {
            kappa1_frac: self.kappa1_frac,
            kappa2_frac: self.kappa2_frac,
            eta: self.eta,
            n_tilde: (self.n_tilde_factor * self.population_size() as f64).ceil() as usize,
            beta: self.beta,
        }
    }
}
