//! Gaussian-process Bayesian optimization of a score over the angle circle.
//!
//! The surrogate uses a squared-exponential kernel on wrapped angular
//! distance, so −180° and 180° are the same point. Candidates are picked by
//! expected improvement (minimization form) on a fixed grid.

mod bo;
mod gp;

pub use bo::{bo_minimize, BoConfig, BoResult};
pub use gp::{gp_fit, gp_posterior, kernel, GpConfig, GpState, JITTER_LADDER};

use std::error::Error;
use std::io::Write;

use thiserror::Error;

use crate::AngleDeg;

#[derive(Debug, Error)]
pub enum GpError {
    #[error("invalid GP config: {0}")]
    Config(String),
    #[error("GP needs at least one observation")]
    NoObservations,
    #[error("non-finite observation {value} at {angle}")]
    NonFinite { angle: AngleDeg, value: f64 },
    #[error("duplicate observation angle {0} with zero noise variance")]
    DuplicateAngle(AngleDeg),
    #[error("kernel matrix of {n} observations is not positive definite even with jitter")]
    NotPositiveDefinite { n: usize },
}

#[derive(Debug, Error)]
pub enum BoError {
    #[error("invalid optimizer config: {0}")]
    Config(String),
    #[error(transparent)]
    GpConfig(#[from] GpError),
    #[error("oracle failed after {} evaluations: {source}", trace.len())]
    Oracle {
        source: Box<dyn Error + Send + Sync>,
        trace: Vec<(AngleDeg, f64)>,
    },
    #[error("surrogate failed after {} evaluations: {source}", trace.len())]
    Gp {
        source: GpError,
        trace: Vec<(AngleDeg, f64)>,
    },
}

/// Standard normal density.
pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard normal distribution function.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Expected improvement below `f_best` for minimization. Never negative.
pub fn expected_improvement(mean: f64, std: f64, f_best: f64, xi: f64) -> f64 {
    let gain = f_best - mean - xi;
    if std < 1e-12 {
        return gain.max(0.0);
    }
    let z = gain / std;
    (gain * normal_cdf(z) + std * normal_pdf(z)).max(0.0)
}

/// Writes a search trace as CSV `step,angle_deg,score`, steps from 1.
pub fn write_trace_csv<W: Write>(out: W, trace: &[(AngleDeg, f64)]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step", "angle_deg", "score"])?;
    for (i, (a, s)) in trace.iter().enumerate() {
        w.write_record([(i + 1).to_string(), a.degrees().to_string(), s.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
