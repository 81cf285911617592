//! Objective vectors and Pareto dominance (maximization convention).

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Expected return per objective, in environment units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ObjectiveVector(Vec<f64>);

impl ObjectiveVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::Parameter(format!(
                "objective vector needs at least 2 entries, got {}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("objective {i} is not finite")));
        }
        Ok(Self(values))
    }

    pub fn zeros(m: usize) -> Self {
        Self(vec![0.0; m])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self(self.0.iter().map(|v| v * factor).collect())
    }
}

impl std::ops::Index<usize> for ObjectiveVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl TryFrom<Vec<f64>> for ObjectiveVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<ObjectiveVector> for Vec<f64> {
    fn from(v: ObjectiveVector) -> Self {
        v.0
    }
}

/// `a` dominates `b` when it is no worse in every objective and differs somewhere.
pub fn dominates(a: &ObjectiveVector, b: &ObjectiveVector) -> Result<bool> {
    check_dim(a.len(), b.len())?;
    Ok(dominates_slice(a.values(), b.values()))
}

pub(crate) fn dominates_slice(a: &[f64], b: &[f64]) -> bool {
    let mut strictly_better = false;
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return false;
        }
        if x > y {
            strictly_better = true;
        }
    }
    strictly_better
}

/// Indices (ascending) of all points not dominated by any other point.
/// Duplicated points are all kept.
pub fn nondominated_filter(points: &[ObjectiveVector]) -> Result<Vec<usize>> {
    let first = points.first().ok_or(Error::EmptyInput("nondominated_filter"))?;
    for p in points {
        check_dim(first.len(), p.len())?;
    }

    // Sorting by the first objective (descending) means a point can only be
    // dominated by points earlier in the order or tied on that objective.
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&i, &j| {
        points[j].values()[0]
            .total_cmp(&points[i].values()[0])
            .then_with(|| {
                let si: f64 = points[i].values().iter().sum();
                let sj: f64 = points[j].values().iter().sum();
                sj.total_cmp(&si)
            })
    });

    let mut front: Vec<usize> = Vec::new();
    for &i in &order {
        let p = points[i].values();
        if !front.iter().any(|&k| dominates_slice(points[k].values(), p)) {
            front.push(i);
        }
    }
    front.sort_unstable();
    Ok(front)
}
