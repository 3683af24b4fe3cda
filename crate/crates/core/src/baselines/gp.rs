//! Gaussian-process surrogate and expected-improvement acquisition for the
//! online search baseline.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{ensure_finite, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GpConfig {
    /// Squared-exponential length scale per input dimension.
    pub length_scales: Vec<f64>,
    /// Observation noise variance on standardized targets.
    pub noise: f64,
    pub jitter: f64,
}

impl Default for GpConfig {
    fn default() -> Self {
        Self {
            length_scales: vec![0.3; 5],
            noise: 1e-2,
            jitter: 1e-6,
        }
    }
}

impl GpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.length_scales.is_empty() || self.length_scales.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            return Err(Error::Config("GP length scales must be positive".into()));
        }
        if !(self.noise >= 0.0 && self.jitter >= 0.0) {
            return Err(Error::Config("GP noise and jitter must be non-negative".into()));
        }
        Ok(())
    }
}

/// Exact GP posterior with unit signal variance over standardized targets.
#[derive(Debug, Clone)]
pub struct GaussianProcess {
    cfg: GpConfig,
    xs: Vec<Vec<f64>>,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    y_mean: f64,
    y_std: f64,
}

fn se_kernel(a: &[f64], b: &[f64], ls: &[f64]) -> f64 {
    let d2: f64 = a
        .iter()
        .zip(b)
        .zip(ls)
        .map(|((x, y), l)| ((x - y) / l).powi(2))
        .sum();
    (-0.5 * d2).exp()
}

impl GaussianProcess {
    pub fn fit(xs: &[Vec<f64>], ys: &[f64], cfg: &GpConfig) -> Result<Self> {
        cfg.validate()?;
        if xs.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "GP fit needs at least 2 observations, got {}",
                xs.len()
            )));
        }
        if ys.len() != xs.len() {
            return Err(Error::Shape {
                expected: xs.len(),
                actual: ys.len(),
            });
        }
        let dim = cfg.length_scales.len();
        for x in xs {
            if x.len() != dim {
                return Err(Error::Shape {
                    expected: dim,
                    actual: x.len(),
                });
            }
            ensure_finite(x, "GP input")?;
        }
        ensure_finite(ys, "GP target")?;
        let n = xs.len();
        let y_mean = ys.iter().sum::<f64>() / n as f64;
        let var = ys.iter().map(|y| (y - y_mean).powi(2)).sum::<f64>() / n as f64;
        let y_std = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
        let k = DMatrix::from_fn(n, n, |i, j| {
            let v = se_kernel(&xs[i], &xs[j], &cfg.length_scales);
            if i == j {
                v + cfg.noise + cfg.jitter
            } else {
                v
            }
        });
        let chol = Cholesky::new(k).ok_or_else(|| Error::InvalidInput("GP kernel matrix is not positive definite".into()))?;
        let y = DVector::from_iterator(n, ys.iter().map(|y| (y - y_mean) / y_std));
        let alpha = chol.solve(&y);
        Ok(Self {
            cfg: cfg.clone(),
            xs: xs.to_vec(),
            chol,
            alpha,
            y_mean,
            y_std,
        })
    }

    /// Posterior mean and standard deviation of the latent function at `x`,
    /// in the original target units.
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        self.predict_batch(std::slice::from_ref(&x.to_vec()))[0]
    }

    pub fn predict_batch(&self, xs: &[Vec<f64>]) -> Vec<(f64, f64)> {
        let n = self.xs.len();
        let ks = DMatrix::from_fn(n, xs.len(), |i, j| se_kernel(&xs[j], &self.xs[i], &self.cfg.length_scales));
        let means = ks.tr_mul(&self.alpha);
        // var = k(x,x) - |L^-1 k_*|^2
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&ks)
            .expect("Cholesky factor has a positive diagonal");
        (0..xs.len())
            .map(|j| {
                let var = (1.0 - v.column(j).norm_squared()).max(0.0);
                (self.y_mean + self.y_std * means[j], self.y_std * var.sqrt())
            })
            .collect()
    }
}

/// Expected improvement over `best` for a maximization problem.
pub fn expected_improvement(mean: f64, sd: f64, best: f64, xi: f64) -> f64 {
    let imp = mean - best - xi;
    if sd <= 1e-12 {
        return imp.max(0.0);
    }
    let z = imp / sd;
    let n = Normal::standard();
    (imp * n.cdf(z) + sd * n.pdf(z)).max(0.0)
}

/// Index of the candidate with the largest expected improvement; the first
/// (lowest) candidate wins ties, so callers pass candidates in
/// lexicographic order.
pub fn ei_acquire(gp: &GaussianProcess, candidates: &[Vec<f64>], best: f64, xi: f64) -> Result<usize> {
    if candidates.is_empty() {
        return Err(Error::Empty("candidate grid"));
    }
    let mut best_i = 0;
    let mut best_ei = f64::NEG_INFINITY;
    for (i, (m, s)) in gp.predict_batch(candidates).into_iter().enumerate() {
        let ei = expected_improvement(m, s, best, xi);
        if ei > best_ei {
            best_ei = ei;
            best_i = i;
        }
    }
    Ok(best_i)
}
