use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::GpPreferenceModel;
use crate::error::{Error, Result};
use crate::task::PolicyTask;
use crate::weights::{das_dennis_at_least, shift_weight, WeightVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TranslateConfig {
    pub kappa1_frac: f64,
    pub kappa2_frac: f64,
    /// Step toward the nearest promising weight, in `[0, 1]`.
    pub eta: f64,
    /// Minimum size of the fresh lattice.
    pub n_tilde: usize,
    /// Weight of the predictive variance in the preference score.
    pub beta: f64,
}

impl Default for TranslateConfig {
    fn default() -> Self {
        Self {
            kappa1_frac: 0.8,
            kappa2_frac: 0.2,
            eta: 0.5,
            n_tilde: 12,
            beta: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Translation {
    /// Top-scored tasks followed by the re-weighted clones.
    pub tasks: Vec<PolicyTask>,
    pub kappa1: usize,
    pub kappa2: usize,
    /// Preference score of every input task, in input order.
    pub scores: Vec<f64>,
    /// The fresh lattice before shifting.
    pub lattice: Vec<WeightVector>,
    /// Each lattice vector after moving toward its nearest promising weight.
    pub shifted: Vec<WeightVector>,
    /// For every shifted vector, the promising weight it moved toward.
    pub references: Vec<WeightVector>,
}

/// `round(frac * n)` for the kept and the cloned share; at least one task is kept.
pub fn split_sizes(n: usize, kappa1_frac: f64, kappa2_frac: f64) -> (usize, usize) {
    let k1 = ((kappa1_frac * n as f64).round() as usize).clamp(1, n.max(1));
    let k2 = (kappa2_frac * n as f64).round() as usize;
    (k1, k2)
}

/// Builds the next population from the current one and the fitted model.
///
/// Tasks are scored by `mu + beta * sigma2`; the best `kappa1` survive with
/// their weights. A fresh lattice is pulled toward those weights by `eta`,
/// `kappa2` of the pulled vectors are drawn without replacement, and each is
/// given a clone of a uniformly chosen survivor.
pub fn translate<R: Rng + ?Sized>(
    tasks: &[PolicyTask],
    model: &GpPreferenceModel,
    cfg: &TranslateConfig,
    next_id: &mut u64,
    rng: &mut R,
) -> Result<Translation> {
    if tasks.is_empty() {
        return Err(Error::EmptyInput("archive"));
    }
    if !(cfg.kappa1_frac > 0.0 && cfg.kappa1_frac <= 1.0)
        || !(0.0..=1.0).contains(&cfg.kappa2_frac)
    {
        return Err(Error::Parameter(format!(
            "kappa fractions out of range: {}, {}",
            cfg.kappa1_frac, cfg.kappa2_frac
        )));
    }
    let m = tasks[0].weight.len();
    let n = tasks.len();
    let scores = tasks
        .iter()
        .map(|t| {
            let (mu, s2) = model.predict(t.objective_estimate.values())?;
            Ok(mu + cfg.beta * s2)
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|a, b| scores[*b].total_cmp(&scores[*a]).then(a.cmp(b)));

    let (kappa1, kappa2) = split_sizes(n, cfg.kappa1_frac, cfg.kappa2_frac);
    if cfg.n_tilde < kappa2 {
        return Err(Error::Parameter(format!(
            "lattice size {} is smaller than the {kappa2} clones requested",
            cfg.n_tilde
        )));
    }
    let kept: Vec<&PolicyTask> = order[..kappa1].iter().map(|&i| &tasks[i]).collect();

    let lattice = das_dennis_at_least(m, cfg.n_tilde.max(1))?;
    let mut shifted = Vec::with_capacity(lattice.len());
    let mut references = Vec::with_capacity(lattice.len());
    for w in &lattice {
        let reference = kept
            .iter()
            .map(|t| &t.weight)
            .min_by(|a, b| a.distance(w).total_cmp(&b.distance(w)))
            .expect("at least one task is kept");
        shifted.push(shift_weight(w, reference, cfg.eta)?);
        references.push(reference.clone());
    }

    let mut out: Vec<PolicyTask> = kept.iter().map(|t| (*t).clone()).collect();
    for idx in sample(rng, shifted.len(), kappa2).into_iter() {
        let parent = kept[rng.random_range(0..kappa1)];
        let id = *next_id;
        *next_id += 1;
        out.push(parent.clone_as(id, shifted[idx].clone(), rng.random()));
    }
    Ok(Translation {
        tasks: out,
        kappa1,
        kappa2,
        scores,
        lattice,
        shifted,
        references,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pareto::ObjectiveVector;
    use crate::preference::{fit_map, ComparisonRecord, KernelParams, Outcome};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn population(n: usize) -> Vec<PolicyTask> {
        crate::weights::das_dennis(2, n - 1)
            .unwrap()
            .into_iter()
            .enumerate()
            .map(|(i, w)| {
                let f = vec![w.as_slice()[0] * 3.0, w.as_slice()[1] * 3.0];
                let mut t = PolicyTask::new(i as u64, w, 3, 2, &[4], i as u64);
                t.objective_estimate = ObjectiveVector::new(f).unwrap();
                t
            })
            .collect()
    }

    fn prefers_first() -> GpPreferenceModel {
        let v = |x: [f64; 2]| ObjectiveVector::new(x.to_vec()).unwrap();
        fit_map(
            &[
                ComparisonRecord::new(v([3.0, 0.0]), v([0.0, 3.0]), Outcome::ABetter),
                ComparisonRecord::new(v([2.0, 1.0]), v([1.0, 2.0]), Outcome::ABetter),
            ],
            KernelParams::default(),
        )
        .unwrap()
    }

    #[test]
    fn default_split_of_ten() {
        assert_eq!(split_sizes(10, 0.8, 0.2), (8, 2));
        assert_eq!(split_sizes(1, 0.2, 0.2), (1, 0));
    }

    #[test]
    fn sizes_ids_and_bias() {
        let tasks = population(10);
        let mut next = 100;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let t = translate(&tasks, &prefers_first(), &TranslateConfig::default(), &mut next, &mut rng).unwrap();
        assert_eq!(t.tasks.len(), 10);
        assert_eq!((t.kappa1, t.kappa2), (8, 2));
        assert_eq!(next, 102);
        assert_eq!(t.tasks[8].id, 100);
        assert_eq!(t.tasks[9].times_queried, 0);
        assert!(t.lattice.len() >= 12);
        // survivors are the top eight by score
        let mut sorted = t.scores.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        for kept in &t.tasks[..8] {
            assert!(t.scores[kept.id as usize] >= sorted[7]);
        }
    }

    #[test]
    fn mean_only_score_favours_preferred_end() {
        let tasks = population(10);
        let mut next = 100;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cfg = TranslateConfig {
            beta: 0.0,
            ..TranslateConfig::default()
        };
        let t = translate(&tasks, &prefers_first(), &cfg, &mut next, &mut rng).unwrap();
        assert!(t.tasks[0].weight.as_slice()[0] > 0.8);
        let kept: Vec<u64> = t.tasks[..8].iter().map(|k| k.id).collect();
        let dropped: Vec<&PolicyTask> = tasks.iter().filter(|k| !kept.contains(&k.id)).collect();
        assert!(dropped.iter().all(|k| k.weight.as_slice()[0] < 0.5));
    }

    #[test]
    fn zero_step_keeps_lattice() {
        let tasks = population(5);
        let mut next = 10;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = TranslateConfig {
            eta: 0.0,
            ..TranslateConfig::default()
        };
        let t = translate(&tasks, &prefers_first(), &cfg, &mut next, &mut rng).unwrap();
        assert_eq!(t.shifted, t.lattice);
    }

    #[test]
    fn lattice_smaller_than_clone_count_is_rejected() {
        let tasks = population(10);
        let mut next = 0;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = TranslateConfig {
            kappa2_frac: 0.5,
            n_tilde: 3,
            ..TranslateConfig::default()
        };
        assert!(matches!(
            translate(&tasks, &prefers_first(), &cfg, &mut next, &mut rng),
            Err(Error::Parameter(_))
        ));
    }
}
