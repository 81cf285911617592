//! Pairwise-comparison Gaussian process with a probit likelihood, fitted by
//! Laplace approximation.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::{ComparisonRecord, Outcome};
use crate::error::{Error, Result};

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KernelParams {
    pub length_scale: f64,
    pub signal_variance: f64,
    pub jitter: f64,
}

impl Default for KernelParams {
    fn default() -> Self {
        Self {
            length_scale: 1.0,
            signal_variance: 1.0,
            jitter: 1e-8,
        }
    }
}

impl KernelParams {
    fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        self.signal_variance * (-0.5 * d2 / (self.length_scale * self.length_scale)).exp()
    }
}

/// `(ln Phi(z), phi(z) / Phi(z))`, accurate far into the lower tail.
fn log_cdf_and_ratio(z: f64) -> (f64, f64) {
    if z > -30.0 {
        let cdf = 0.5 * erfc(-z / SQRT_2);
        let pdf = (-0.5 * z * z - LN_SQRT_2PI).exp();
        (cdf.ln(), pdf / cdf)
    } else {
        let z2 = z * z;
        let series = 1.0 - 1.0 / z2 + 3.0 / (z2 * z2);
        let log_cdf = -0.5 * z2 - LN_SQRT_2PI - (-z).ln() + series.ln();
        (log_cdf, -z / series)
    }
}

/// Fitted latent-utility posterior over the distinct compared vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct GpPreferenceModel {
    kernel: KernelParams,
    /// Distinct training vectors in raw units, in first-seen order.
    points: Vec<Vec<f64>>,
    center: Vec<f64>,
    scale: Vec<f64>,
    standardized: Vec<Vec<f64>>,
    u: DVector<f64>,
    /// `K^{-1} U`.
    k_inv_u: DVector<f64>,
    lambda: DMatrix<f64>,
    /// `(K + Lambda^{-1})^{-1}`, computed as `Lambda (I + K Lambda)^{-1}`.
    predictive: DMatrix<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Strict comparisons as `(winner, loser)` indices into the point list.
struct Pairs {
    points: Vec<Vec<f64>>,
    pairs: Vec<(usize, usize)>,
}

fn collect_pairs(data: &[ComparisonRecord]) -> Pairs {
    let mut points: Vec<Vec<f64>> = Vec::new();
    let index_of = |v: &[f64], points: &mut Vec<Vec<f64>>| -> usize {
        match points.iter().position(|p| p.as_slice() == v) {
            Some(i) => i,
            None => {
                points.push(v.to_vec());
                points.len() - 1
            }
        }
    };
    let mut pairs = Vec::new();
    for r in data {
        let (w, l) = match r.outcome {
            Outcome::ABetter => (&r.a, &r.b),
            Outcome::BBetter => (&r.b, &r.a),
            Outcome::Indifferent => continue,
        };
        if w == l {
            continue;
        }
        let wi = index_of(w.values(), &mut points);
        let li = index_of(l.values(), &mut points);
        pairs.push((wi, li));
    }
    Pairs { points, pairs }
}

fn standardize(points: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>, Vec<Vec<f64>>) {
    let m = points[0].len();
    let n = points.len() as f64;
    let mut center = vec![0.0; m];
    let mut scale = vec![0.0; m];
    for j in 0..m {
        let mean = points.iter().map(|p| p[j]).sum::<f64>() / n;
        let var = points.iter().map(|p| (p[j] - mean).powi(2)).sum::<f64>() / n;
        center[j] = mean;
        scale[j] = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
    }
    let standardized = points
        .iter()
        .map(|p| (0..m).map(|j| (p[j] - center[j]) / scale[j]).collect())
        .collect();
    (center, scale, standardized)
}

struct Likelihood {
    neg_log: f64,
    /// Gradient of the log-likelihood w.r.t. U.
    grad: DVector<f64>,
    /// Hessian of the negative log-likelihood w.r.t. U.
    hessian: DMatrix<f64>,
}

fn likelihood(u: &DVector<f64>, pairs: &[(usize, usize)]) -> Likelihood {
    let k = u.len();
    let mut neg_log = 0.0;
    let mut grad = DVector::zeros(k);
    let mut hessian = DMatrix::zeros(k, k);
    for &(w, l) in pairs {
        let z = (u[w] - u[l]) / SQRT_2;
        let (log_cdf, r) = log_cdf_and_ratio(z);
        neg_log -= log_cdf;
        let g = r / SQRT_2;
        grad[w] += g;
        grad[l] -= g;
        let h = r * (z + r) / 2.0;
        hessian[(w, w)] += h;
        hessian[(l, l)] += h;
        hessian[(w, l)] -= h;
        hessian[(l, w)] -= h;
    }
    Likelihood {
        neg_log,
        grad,
        hessian,
    }
}

const MAX_ITERATIONS: usize = 100;
const GRAD_TOL: f64 = 1e-8;

/// MAP fit of the latent utilities `U` at the distinct compared vectors:
/// minimizes `-sum log Phi((u_w - u_l) / sqrt 2) + U^T K^{-1} U / 2` by damped
/// Newton steps. Indifferent records carry no likelihood term.
pub fn fit_map(data: &[ComparisonRecord], kernel: KernelParams) -> Result<GpPreferenceModel> {
    let Pairs { points, pairs } = collect_pairs(data);
    if pairs.is_empty() {
        return Err(Error::EmptyInput("strict comparisons"));
    }
    if !(kernel.length_scale > 0.0 && kernel.signal_variance > 0.0 && kernel.jitter >= 0.0) {
        return Err(Error::Parameter(format!("invalid kernel {kernel:?}")));
    }
    let (center, scale, standardized) = standardize(&points);
    let n = points.len();
    let mut k = DMatrix::from_fn(n, n, |i, j| kernel.eval(&standardized[i], &standardized[j]));
    for i in 0..n {
        k[(i, i)] += kernel.jitter;
    }
    if k.clone().cholesky().is_none() {
        return Err(Error::Numeric("kernel matrix is not positive definite".into()));
    }

    // Work in a = K^{-1} U so the prior term is a^T K a / 2 and no inverse of K
    // is ever formed.
    let objective = |a: &DVector<f64>| -> (f64, DVector<f64>, Likelihood) {
        let u = &k * a;
        let lik = likelihood(&u, &pairs);
        let value = lik.neg_log + 0.5 * a.dot(&u);
        (value, u, lik)
    };
    let identity = DMatrix::<f64>::identity(n, n);
    let mut a = DVector::zeros(n);
    let (mut value, mut u, mut lik) = objective(&a);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        let grad_u = &a - &lik.grad;
        if grad_u.amax() < GRAD_TOL {
            converged = true;
            break;
        }
        iterations += 1;
        // Full Newton target: U* = K (I + Lambda K)^{-1} (Lambda U + grad log p).
        let rhs = &lik.hessian * &u + &lik.grad;
        let system = &identity + &lik.hessian * &k;
        let target = system
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Numeric("singular Newton system".into()))?;
        let direction = target - &a;
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let trial = &a + &direction * step;
            let (v, tu, tl) = objective(&trial);
            if v.is_finite() && v <= value {
                a = trial;
                value = v;
                u = tu;
                lik = tl;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            converged = (&a - &lik.grad).amax() < 1e-6;
            break;
        }
    }
    if !converged {
        log::warn!("preference model stopped after {iterations} Newton iterations without converging");
    }
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite latent utilities".into()));
    }

    let lambda = lik.hessian;
    let system_t = (&identity + &k * &lambda).transpose();
    let predictive = system_t
        .lu()
        .solve(&lambda)
        .ok_or_else(|| Error::Numeric("singular predictive system".into()))?
        .transpose();
    let predictive = (&predictive + predictive.transpose()) * 0.5;

    Ok(GpPreferenceModel {
        kernel,
        points,
        center,
        scale,
        standardized,
        u,
        k_inv_u: a,
        lambda,
        predictive,
        iterations,
        converged,
    })
}

impl GpPreferenceModel {
    pub fn training_points(&self) -> &[Vec<f64>] {
        &self.points
    }

    /// MAP utilities, aligned with [`Self::training_points`].
    pub fn utilities(&self) -> &[f64] {
        self.u.as_slice()
    }

    pub fn lambda(&self) -> &DMatrix<f64> {
        &self.lambda
    }

    pub fn kernel(&self) -> KernelParams {
        self.kernel
    }

    fn cross(&self, f: &[f64]) -> Result<(Vec<f64>, DVector<f64>)> {
        crate::error::check_dim(self.center.len(), f.len())?;
        let x: Vec<f64> = f
            .iter()
            .zip(&self.center)
            .zip(&self.scale)
            .map(|((v, c), s)| (v - c) / s)
            .collect();
        let ks = DVector::from_iterator(
            self.standardized.len(),
            self.standardized.iter().map(|p| self.kernel.eval(&x, p)),
        );
        Ok((x, ks))
    }

    /// Predictive mean and variance (floored at zero) of the latent utility.
    pub fn predict(&self, f: &[f64]) -> Result<(f64, f64)> {
        let (x, ks) = self.cross(f)?;
        let mu = ks.dot(&self.k_inv_u);
        let var = self.kernel.eval(&x, &x) - ks.dot(&(&self.predictive * &ks));
        Ok((mu, var.max(0.0)))
    }

    /// Variance before flooring; exposed for diagnostics.
    pub fn raw_variance(&self, f: &[f64]) -> Result<f64> {
        let (x, ks) = self.cross(f)?;
        Ok(self.kernel.eval(&x, &x) - ks.dot(&(&self.predictive * &ks)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pareto::ObjectiveVector;

    fn rec(a: [f64; 2], b: [f64; 2], outcome: Outcome) -> ComparisonRecord {
        ComparisonRecord::new(
            ObjectiveVector::new(a.to_vec()).unwrap(),
            ObjectiveVector::new(b.to_vec()).unwrap(),
            outcome,
        )
    }

    #[test]
    fn log_cdf_branches_agree() {
        for z in [-29.9f64, -30.0, -30.1] {
            let (lc, r) = log_cdf_and_ratio(z);
            assert!(lc.is_finite() && r.is_finite());
        }
        let (a, ra) = log_cdf_and_ratio(-29.999);
        let (b, rb) = log_cdf_and_ratio(-30.001);
        assert!((a - b).abs() < 0.1);
        assert!((ra - rb).abs() < 0.01);
        let (l0, r0) = log_cdf_and_ratio(0.0);
        assert!((l0 - 0.5f64.ln()).abs() < 1e-15);
        assert!((r0 - 2.0 * (-LN_SQRT_2PI).exp()).abs() < 1e-15);
    }

    #[test]
    fn single_record_orders_utilities() {
        let m = fit_map(&[rec([1.0, 0.0], [0.0, 1.0], Outcome::ABetter)], KernelParams::default()).unwrap();
        assert!(m.converged);
        assert!(m.utilities()[0] > m.utilities()[1]);
        // symmetric prior: equal and opposite
        assert!((m.utilities()[0] + m.utilities()[1]).abs() < 1e-9);
    }

    #[test]
    fn opposing_records_cancel() {
        let data = [
            rec([1.0, 0.0], [0.0, 1.0], Outcome::ABetter),
            rec([1.0, 0.0], [0.0, 1.0], Outcome::BBetter),
        ];
        let m = fit_map(&data, KernelParams::default()).unwrap();
        assert!((m.utilities()[0] - m.utilities()[1]).abs() < 1e-9);
    }

    #[test]
    fn indifferent_only_is_rejected() {
        let data = [rec([1.0, 0.0], [0.0, 1.0], Outcome::Indifferent)];
        assert!(matches!(fit_map(&data, KernelParams::default()), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn newton_target_is_stationary() {
        let data = [
            rec([1.0, 0.0], [0.0, 1.0], Outcome::ABetter),
            rec([0.5, 0.5], [0.0, 1.0], Outcome::ABetter),
            rec([1.0, 0.0], [0.5, 0.5], Outcome::ABetter),
        ];
        let m = fit_map(&data, KernelParams::default()).unwrap();
        assert!(m.converged);
        let u = m.utilities();
        assert!(u[0] > u[2] && u[2] > u[1]);
    }

    #[test]
    fn posterior_contracts_and_reverts_to_prior() {
        let data = [
            rec([1.0, 0.0], [0.0, 1.0], Outcome::ABetter),
            rec([1.0, 0.0], [0.0, 1.0], Outcome::ABetter),
            rec([1.0, 0.0], [0.0, 1.0], Outcome::ABetter),
        ];
        let m = fit_map(&data, KernelParams::default()).unwrap();
        let (_, s2) = m.predict(&[1.0, 0.0]).unwrap();
        assert!(s2 < 1.0);
        let (mu, s2) = m.predict(&[1e3, -1e3]).unwrap();
        assert!(mu.abs() < 1e-12);
        assert!((s2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn predictive_mean_matches_utilities_at_training_points() {
        let data = [
            rec([1.0, 0.0], [0.0, 1.0], Outcome::ABetter),
            rec([2.0, 0.5], [1.0, 0.0], Outcome::ABetter),
        ];
        let m = fit_map(&data, KernelParams::default()).unwrap();
        for (p, u) in m.training_points().iter().zip(m.utilities()) {
            let (mu, _) = m.predict(p).unwrap();
            assert!((mu - u).abs() < 1e-6, "{mu} vs {u}");
        }
    }
}
