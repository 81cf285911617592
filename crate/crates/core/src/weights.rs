//! Weight vectors on the unit simplex and scalarization of vector returns.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::pareto::ObjectiveVector;

const SIMPLEX_TOL: f64 = 1e-12;
/// Per-component floor applied before Tchebycheff aggregation.
pub const TCHEBYCHEFF_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::EmptyInput("weight vector"));
        }
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::Parameter(format!(
                "weights must be finite and non-negative: {w:?}"
            )));
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::Parameter(format!("weights sum to {sum}, not 1")));
        }
        Ok(Self(w))
    }

    pub fn uniform(m: usize) -> Self {
        Self(vec![1.0 / m as f64; m])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn distance(&self, other: &WeightVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

impl TryFrom<Vec<f64>> for WeightVector {
    type Error = Error;

    fn try_from(w: Vec<f64>) -> Result<Self> {
        Self::new(w)
    }
}

impl From<WeightVector> for Vec<f64> {
    fn from(w: WeightVector) -> Self {
        w.0
    }
}

/// Aggregation reference for Tchebycheff forms. Defaults to the origin (nadir).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferencePoint(pub Vec<f64>);

impl ReferencePoint {
    pub fn nadir(m: usize) -> Self {
        Self(vec![0.0; m])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TchebycheffForm {
    /// `max_i w_i |J_i - z_i|`, as printed.
    Verbatim,
    /// `min_i w_i (J_i - z_i)`, maximized.
    #[default]
    Achievement,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scalarization {
    #[default]
    Linear,
    TchebycheffVerbatim,
    TchebycheffAchievement,
}

impl Scalarization {
    pub fn apply(&self, values: &[f64], w: &WeightVector) -> Result<f64> {
        match self {
            Scalarization::Linear => linear_slice(values, w),
            Scalarization::TchebycheffVerbatim => {
                tchebycheff_slice(values, w, None, TchebycheffForm::Verbatim, TCHEBYCHEFF_FLOOR)
            }
            Scalarization::TchebycheffAchievement => tchebycheff_slice(
                values,
                w,
                None,
                TchebycheffForm::Achievement,
                TCHEBYCHEFF_FLOOR,
            ),
        }
    }
}

fn binomial(n: u64, k: u64) -> u64 {
    let k = k.min(n - k.min(n));
    (1..=k).fold(1u64, |acc, d| acc * (n - k + d) / d)
}

/// Number of simplex-lattice vectors for `m` objectives and `h` divisions.
pub fn lattice_size(m: usize, h: usize) -> usize {
    binomial((h + m - 1) as u64, (m - 1) as u64) as usize
}

/// Evenly spaced weights on the unit simplex: every vector with coordinates in
/// `{0, 1/h, ..., 1}` summing to one, in lexicographic order of the integer
/// numerators.
pub fn das_dennis(m: usize, h: usize) -> Result<Vec<WeightVector>> {
    if m < 2 {
        return Err(Error::Parameter(format!("need m >= 2 objectives, got {m}")));
    }
    if h < 1 {
        return Err(Error::Parameter("need at least one division".into()));
    }
    let mut out = Vec::with_capacity(lattice_size(m, h));
    let mut counts = vec![0usize; m];
    lattice_rec(&mut counts, 0, h, h, &mut out);
    Ok(out)
}

fn lattice_rec(counts: &mut [usize], pos: usize, left: usize, h: usize, out: &mut Vec<WeightVector>) {
    let m = counts.len();
    if pos == m - 1 {
        counts[pos] = left;
        let w: Vec<f64> = counts.iter().map(|&c| c as f64 / h as f64).collect();
        // i/h values can sum to 1 +- a few ulps; put the residual on the
        // largest coordinate so the simplex check is exact.
        let residual = 1.0 - w.iter().sum::<f64>();
        let mut w = w;
        let argmax = (0..m).max_by(|&a, &b| w[a].total_cmp(&w[b])).unwrap_or(0);
        w[argmax] += residual;
        out.push(WeightVector(w));
        return;
    }
    for c in 0..=left {
        counts[pos] = c;
        lattice_rec(counts, pos + 1, left - c, h, out);
    }
}

/// Smallest lattice with at least `n` vectors.
pub fn das_dennis_at_least(m: usize, n: usize) -> Result<Vec<WeightVector>> {
    let mut h = 1;
    while lattice_size(m, h) < n {
        h += 1;
    }
    das_dennis(m, h)
}

/// Weighted sum `sum_i w_i J_i`.
pub fn scalarize_linear(j: &ObjectiveVector, w: &WeightVector) -> Result<f64> {
    linear_slice(j.values(), w)
}

fn linear_slice(j: &[f64], w: &WeightVector) -> Result<f64> {
    check_dim(w.len(), j.len())?;
    Ok(j.iter().zip(w.as_slice()).map(|(a, b)| a * b).sum())
}

/// Weighted Tchebycheff aggregation, exactly as written. The training path
/// ([`Scalarization::apply`]) floors each weight at [`TCHEBYCHEFF_FLOOR`]
/// first so zero-weight objectives still contribute.
pub fn scalarize_tchebycheff(
    j: &ObjectiveVector,
    w: &WeightVector,
    z: &ReferencePoint,
    form: TchebycheffForm,
) -> Result<f64> {
    tchebycheff_slice(j.values(), w, Some(z), form, 0.0)
}

fn tchebycheff_slice(
    j: &[f64],
    w: &WeightVector,
    z: Option<&ReferencePoint>,
    form: TchebycheffForm,
    floor: f64,
) -> Result<f64> {
    check_dim(w.len(), j.len())?;
    if let Some(z) = z {
        check_dim(w.len(), z.0.len())?;
    }
    let terms = j.iter().enumerate().map(|(i, ji)| {
        let zi = z.map_or(0.0, |z| z.0[i]);
        let wi = w.as_slice()[i].max(floor);
        match form {
            TchebycheffForm::Verbatim => wi * (ji - zi).abs(),
            TchebycheffForm::Achievement => wi * (ji - zi),
        }
    });
    Ok(match form {
        TchebycheffForm::Verbatim => terms.fold(f64::NEG_INFINITY, f64::max),
        TchebycheffForm::Achievement => terms.fold(f64::INFINITY, f64::min),
    })
}

/// Convex step from `w_tilde` towards `w_ref`: `w_tilde + eta (w_ref - w_tilde)`.
pub fn shift_weight(w_tilde: &WeightVector, w_ref: &WeightVector, eta: f64) -> Result<WeightVector> {
    check_dim(w_tilde.len(), w_ref.len())?;
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::Parameter(format!("step size {eta} outside [0, 1]")));
    }
    if eta == 0.0 {
        return Ok(w_tilde.clone());
    }
    if eta == 1.0 {
        return Ok(w_ref.clone());
    }
    let mut w: Vec<f64> = w_tilde
        .as_slice()
        .iter()
        .zip(w_ref.as_slice())
        .map(|(a, b)| (a + eta * (b - a)).max(0.0))
        .collect();
    // A convex combination sums to 1 up to rounding; fold the drift into the
    // largest entry.
    let residual = 1.0 - w.iter().sum::<f64>();
    let k = (0..w.len()).max_by(|&a, &b| w[a].total_cmp(&w[b])).unwrap_or(0);
    w[k] += residual;
    Ok(WeightVector(w))
}
