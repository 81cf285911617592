//! Preference elicitation: choosing which pair to show the decision maker,
//! learning a utility model from the answers, and turning that model into a
//! new task population.

mod dm;
mod gp;
mod query;
mod translate;

pub use dm::simulated_dm_compare;
pub use gp::{fit_map, GpPreferenceModel, KernelParams};
pub use query::{information, information_value, select_query_pair, QueryLedger};
pub use translate::{split_sizes, translate, TranslateConfig, Translation};

use serde::{Deserialize, Serialize};

use crate::pareto::ObjectiveVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    ABetter,
    BBetter,
    Indifferent,
}

impl Outcome {
    /// The same verdict with `a` and `b` swapped.
    pub fn flipped(self) -> Self {
        match self {
            Outcome::ABetter => Outcome::BBetter,
            Outcome::BBetter => Outcome::ABetter,
            Outcome::Indifferent => Outcome::Indifferent,
        }
    }
}

impl std::str::FromStr for Outcome {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "a_better" => Ok(Outcome::ABetter),
            "b_better" => Ok(Outcome::BBetter),
            "indifferent" => Ok(Outcome::Indifferent),
            other => Err(crate::Error::Parameter(format!("unknown verdict {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Human,
    #[default]
    Simulated,
    /// No verdict arrived in time; recorded as indifferent.
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRecord {
    pub a: ObjectiveVector,
    pub b: ObjectiveVector,
    pub outcome: Outcome,
    #[serde(default)]
    pub generation: u64,
    #[serde(default)]
    pub source: Source,
    #[serde(default)]
    pub a_task: Option<u64>,
    #[serde(default)]
    pub b_task: Option<u64>,
}

impl ComparisonRecord {
    /// Identical vectors cannot be strictly ordered; such a record is stored
    /// as indifferent.
    pub fn new(a: ObjectiveVector, b: ObjectiveVector, outcome: Outcome) -> Self {
        let outcome = if a == b { Outcome::Indifferent } else { outcome };
        Self {
            a,
            b,
            outcome,
            generation: 0,
            source: Source::Simulated,
            a_task: None,
            b_task: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_vectors_force_indifferent() {
        let v = ObjectiveVector::new(vec![1.0, 2.0]).unwrap();
        let r = ComparisonRecord::new(v.clone(), v, Outcome::ABetter);
        assert_eq!(r.outcome, Outcome::Indifferent);
    }

    #[test]
    fn verdict_names() {
        assert_eq!(serde_json::to_string(&Outcome::ABetter).unwrap(), "\"a_better\"");
        assert_eq!("b_better".parse::<Outcome>().unwrap(), Outcome::BBetter);
        assert!("maybe".parse::<Outcome>().is_err());
        assert_eq!(Outcome::ABetter.flipped(), Outcome::BBetter);
    }
}
