//! The decision maker's "golden" target and the two
//! closeness metrics computed against it.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::pareto::ObjectiveVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GoldenTarget {
    /// Hyperplane `{y : y[preferred_index] = target}`.
    AxisTarget { preferred_index: usize, target: f64 },
    /// Fuzzy preference expressed as a linear utility over objectives.
    LinearUtility { utility_weights: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldenSpec {
    #[serde(flatten)]
    pub target: GoldenTarget,
    /// Differences at or below this are reported as indifferent. May be infinite.
    #[serde(default, with = "crate::codec::extended_f64")]
    pub indifference_tolerance: f64,
}

impl GoldenSpec {
    pub fn axis(preferred_index: usize, target: f64) -> Self {
        Self {
            target: GoldenTarget::AxisTarget {
                preferred_index,
                target,
            },
            indifference_tolerance: 0.0,
        }
    }

    pub fn linear(utility_weights: Vec<f64>) -> Self {
        Self {
            target: GoldenTarget::LinearUtility { utility_weights },
            indifference_tolerance: 0.0,
        }
    }

    pub fn with_tolerance(mut self, delta: f64) -> Self {
        self.indifference_tolerance = delta;
        self
    }

    pub fn validate(&self, m: usize) -> Result<()> {
        if self.indifference_tolerance.is_nan() || self.indifference_tolerance < 0.0 {
            return Err(Error::Parameter(
                "indifference tolerance must be non-negative".into(),
            ));
        }
        match &self.target {
            GoldenTarget::AxisTarget {
                preferred_index,
                target,
            } => {
                if *preferred_index >= m {
                    return Err(Error::Parameter(format!(
                        "preferred objective {preferred_index} out of range for m={m}"
                    )));
                }
                if !target.is_finite() {
                    return Err(Error::Parameter("golden target must be finite".into()));
                }
            }
            GoldenTarget::LinearUtility { utility_weights } => {
                check_dim(m, utility_weights.len())?;
                let sum: f64 = utility_weights.iter().sum();
                if utility_weights.iter().any(|w| *w < 0.0) || (sum - 1.0).abs() > 1e-9 {
                    return Err(Error::Parameter(
                        "utility weights must lie on the unit simplex".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Linear utility of `f`, or the negated axis distance for axis targets.
    /// Larger is better in both cases.
    pub fn utility(&self, f: &ObjectiveVector) -> f64 {
        match &self.target {
            GoldenTarget::AxisTarget { .. } => -distance_to_golden(f, self),
            GoldenTarget::LinearUtility { utility_weights } => utility_weights
                .iter()
                .zip(f.values())
                .map(|(w, v)| w * v)
                .sum(),
        }
    }
}

/// Distance of a single objective vector to the golden target.
///
/// For axis targets this is the point-to-hyperplane distance
/// `|f[i] - target|`. For linear utilities it is the negated utility, which
/// is an ordering key only; [`golden_distances`] shifts it to be
/// non-negative over a set.
pub fn distance_to_golden(f: &ObjectiveVector, g: &GoldenSpec) -> f64 {
    match &g.target {
        GoldenTarget::AxisTarget {
            preferred_index,
            target,
        } => (f[*preferred_index] - target).abs(),
        GoldenTarget::LinearUtility { .. } => -g.utility(f),
    }
}

/// Distances for a whole set, non-negative for both golden kinds.
pub fn golden_distances(points: &[ObjectiveVector], g: &GoldenSpec) -> Result<Vec<f64>> {
    if points.is_empty() {
        return Err(Error::EmptyInput("golden_distances"));
    }
    let raw: Vec<f64> = points.iter().map(|f| distance_to_golden(f, g)).collect();
    Ok(match g.target {
        GoldenTarget::AxisTarget { .. } => raw,
        GoldenTarget::LinearUtility { .. } => {
            let floor = raw.iter().copied().fold(f64::INFINITY, f64::min);
            raw.into_iter().map(|d| d - floor).collect()
        }
    })
}

/// Closeness of the best member (minimum distance).
pub fn epsilon_star(points: &[ObjectiveVector], g: &GoldenSpec) -> Result<f64> {
    Ok(golden_distances(points, g)?
        .into_iter()
        .fold(f64::INFINITY, f64::min))
}

/// Average distance over all members.
pub fn epsilon_bar(points: &[ObjectiveVector], g: &GoldenSpec) -> Result<f64> {
    let d = golden_distances(points, g)?;
    Ok(d.iter().sum::<f64>() / d.len() as f64)
}
