//! Gaussian-process regression on the circle of angles.

use super::GpError;
use crate::{wrapped_distance, AngleDeg};

/// Diagonal jitter tried, in order, when the plain factorization fails.
pub const JITTER_LADDER: [f64; 5] = [1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpConfig {
    /// Kernel lengthscale in degrees.
    pub lengthscale: f64,
    pub signal_variance: f64,
    pub noise_variance: f64,
}

impl Default for GpConfig {
    fn default() -> Self {
        GpConfig {
            lengthscale: 30.0,
            signal_variance: 0.25,
            noise_variance: 1e-4,
        }
    }
}

impl GpConfig {
    pub fn validate(&self) -> Result<(), GpError> {
        let ok = self.lengthscale > 0.0
            && self.lengthscale.is_finite()
            && self.signal_variance > 0.0
            && self.signal_variance.is_finite()
            && self.noise_variance >= 0.0
            && self.noise_variance.is_finite();
        if ok {
            Ok(())
        } else {
            Err(GpError::Config(format!(
                "need lengthscale > 0, signal variance > 0, noise variance >= 0; got {self:?}"
            )))
        }
    }
}

/// Squared-exponential covariance over wrapped angular distance.
pub fn kernel(a: AngleDeg, b: AngleDeg, cfg: &GpConfig) -> f64 {
    let d = wrapped_distance(a, b);
    cfg.signal_variance * (-(d * d) / (2.0 * cfg.lengthscale * cfg.lengthscale)).exp()
}

/// A fitted GP: observations, the Cholesky factor of `K + σ_n²I` and the
/// weights `(K + σ_n²I)⁻¹ (y - m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GpState {
    observations: Vec<(AngleDeg, f64)>,
    cfg: GpConfig,
    prior_mean: f64,
    /// Row-major lower-triangular factor.
    chol: Vec<f64>,
    alpha: Vec<f64>,
    jitter: f64,
}

impl GpState {
    pub fn observations(&self) -> &[(AngleDeg, f64)] {
        &self.observations
    }

    pub fn config(&self) -> &GpConfig {
        &self.cfg
    }

    /// Mean of the observed scores, used as the constant prior mean.
    pub fn prior_mean(&self) -> f64 {
        self.prior_mean
    }

    /// Extra diagonal term that made the factorization succeed.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }
}

pub fn gp_fit(obs: &[(AngleDeg, f64)], cfg: &GpConfig) -> Result<GpState, GpError> {
    cfg.validate()?;
    if obs.is_empty() {
        return Err(GpError::NoObservations);
    }
    if let Some(&(a, y)) = obs.iter().find(|(_, y)| !y.is_finite()) {
        return Err(GpError::NonFinite { angle: a, value: y });
    }
    if cfg.noise_variance == 0.0 {
        for (i, &(a, _)) in obs.iter().enumerate() {
            if obs[..i].iter().any(|&(b, _)| wrapped_distance(a, b) == 0.0) {
                return Err(GpError::DuplicateAngle(a));
            }
        }
    }
    let n = obs.len();
    let prior_mean = obs.iter().map(|o| o.1).sum::<f64>() / n as f64;
    let mut gram = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let k = kernel(obs[i].0, obs[j].0, cfg);
            gram[i * n + j] = k;
            gram[j * n + i] = k;
        }
        gram[i * n + i] += cfg.noise_variance;
    }

    let mut jitter = 0.0;
    let mut ladder = JITTER_LADDER.iter();
    let chol = loop {
        if let Some(l) = cholesky(&gram, n, jitter) {
            break l;
        }
        match ladder.next() {
            Some(&j) => jitter = j,
            None => return Err(GpError::NotPositiveDefinite { n }),
        }
    };

    let centered: Vec<f64> = obs.iter().map(|o| o.1 - prior_mean).collect();
    let alpha = backward_solve(&chol, n, &forward_solve(&chol, n, &centered));
    Ok(GpState {
        observations: obs.to_vec(),
        cfg: *cfg,
        prior_mean,
        chol,
        alpha,
        jitter,
    })
}

/// Predictive mean and variance of the latent function at `q`.
pub fn gp_posterior(state: &GpState, q: AngleDeg) -> (f64, f64) {
    let n = state.observations.len();
    let k_star: Vec<f64> = state.observations.iter().map(|&(a, _)| kernel(a, q, &state.cfg)).collect();
    let mean = state.prior_mean + k_star.iter().zip(&state.alpha).map(|(k, a)| k * a).sum::<f64>();
    let v = forward_solve(&state.chol, n, &k_star);
    let var = state.cfg.signal_variance - v.iter().map(|x| x * x).sum::<f64>();
    (mean, var.max(0.0))
}

/// Cholesky factor of `a + jitter·I`, or `None` if a pivot is not positive.
fn cholesky(a: &[f64], n: usize, jitter: f64) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            if i == j {
                sum += jitter;
            }
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if sum.is_nan() || sum <= 0.0 {
                    return None;
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    Some(l)
}

/// Solves `L x = b`.
fn forward_solve(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut x = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[i * n + k] * x[k]).sum();
        x[i] = (b[i] - s) / l[i * n + i];
    }
    x
}

/// Solves `Lᵀ x = b`.
fn backward_solve(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| l[k * n + i] * x[k]).sum();
        x[i] = (b[i] - s) / l[i * n + i];
    }
    x
}
