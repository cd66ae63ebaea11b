//! Bayesian optimization over a uniform grid of angles.

use std::error::Error;

use super::{expected_improvement, gp_fit, gp_posterior, BoError, GpConfig};
use crate::AngleDeg;

#[derive(Debug, Clone, PartialEq)]
pub struct BoConfig {
    /// Grid points spread uniformly over [−180°, 180°).
    pub grid_points: usize,
    pub max_evals: usize,
    /// Stop as soon as any observed score is at or below this.
    pub threshold: f64,
    /// EI exploration margin.
    pub xi: f64,
    /// Evaluated first, in order, after snapping to the nearest grid point.
    pub initial_design: Vec<f64>,
    /// Recorded with a run; the search itself draws no random numbers.
    pub seed: u64,
}

impl Default for BoConfig {
    fn default() -> Self {
        BoConfig {
            grid_points: 180,
            max_evals: 30,
            threshold: 0.05,
            xi: 0.01,
            initial_design: vec![-180.0, -90.0, 0.0, 90.0],
            seed: 0,
        }
    }
}

impl BoConfig {
    pub fn validate(&self) -> Result<(), BoError> {
        let bad = |m: String| Err(BoError::Config(m));
        if self.grid_points < 2 {
            return bad(format!("grid needs at least 2 points, got {}", self.grid_points));
        }
        if self.initial_design.is_empty() {
            return bad("initial design is empty".into());
        }
        if self.max_evals < self.initial_design.len() {
            return bad(format!(
                "budget of {} evaluations is below the {}-point initial design",
                self.max_evals,
                self.initial_design.len()
            ));
        }
        if self.initial_design.iter().any(|a| !a.is_finite()) {
            return bad("initial design angles must be finite".into());
        }
        if !self.xi.is_finite() || self.xi < 0.0 || self.threshold.is_nan() {
            return bad("xi must be finite and non-negative, threshold must not be NaN".into());
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        360.0 / self.grid_points as f64
    }

    /// The search grid, ascending from −180°.
    pub fn grid(&self) -> Vec<AngleDeg> {
        (0..self.grid_points)
            .map(|i| AngleDeg::new(-180.0 + i as f64 * self.spacing()))
            .collect()
    }

    /// Index of the grid point nearest to `angle` (lower index on ties).
    pub fn snap(&self, angle: f64) -> usize {
        let pos = (crate::wrap_degrees(angle) + 180.0) / self.spacing();
        let i = (pos - 0.5).ceil() as usize;
        i % self.grid_points
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoResult {
    pub theta_min: AngleDeg,
    pub best_score: f64,
    /// Every evaluation, in order.
    pub trace: Vec<(AngleDeg, f64)>,
}

/// Minimizes `f` over the grid of `bo`. Never evaluates a grid point twice
/// and never more than `bo.max_evals` times.
pub fn bo_minimize<F, E>(mut f: F, bo: &BoConfig, gp: &GpConfig) -> Result<BoResult, BoError>
where
    F: FnMut(AngleDeg) -> Result<f64, E>,
    E: Into<Box<dyn Error + Send + Sync>>,
{
    bo.validate()?;
    gp.validate()?;
    let grid = bo.grid();
    let mut taken = vec![false; grid.len()];
    let mut trace: Vec<(AngleDeg, f64)> = Vec::with_capacity(bo.max_evals);

    let mut evaluate = |i: usize, trace: &mut Vec<(AngleDeg, f64)>| -> Result<bool, BoError> {
        let value = match f(grid[i]) {
            Ok(v) if v.is_nan() => {
                return Err(BoError::Oracle {
                    source: format!("oracle returned NaN at {}", grid[i]).into(),
                    trace: trace.clone(),
                })
            }
            Ok(v) => v,
            Err(e) => {
                return Err(BoError::Oracle {
                    source: e.into(),
                    trace: trace.clone(),
                })
            }
        };
        trace.push((grid[i], value));
        Ok(value <= bo.threshold)
    };

    let mut done = false;
    for &a in &bo.initial_design {
        let i = bo.snap(a);
        if taken[i] {
            continue;
        }
        taken[i] = true;
        if evaluate(i, &mut trace)? {
            done = true;
            break;
        }
    }

    while !done && trace.len() < bo.max_evals && trace.len() < grid.len() {
        let state = gp_fit(&trace, gp).map_err(|source| BoError::Gp {
            source,
            trace: trace.clone(),
        })?;
        let f_best = trace.iter().map(|t| t.1).fold(f64::INFINITY, f64::min);
        let mut best: Option<(usize, f64)> = None;
        for (i, &q) in grid.iter().enumerate() {
            if taken[i] {
                continue;
            }
            let (mean, var) = gp_posterior(&state, q);
            let ei = expected_improvement(mean, var.sqrt(), f_best, bo.xi);
            // Strict comparison keeps the smallest angle on ties.
            if best.is_none_or(|(_, b)| ei > b) {
                best = Some((i, ei));
            }
        }
        let Some((i, _)) = best else { break };
        taken[i] = true;
        done = evaluate(i, &mut trace)?;
    }

    let (theta_min, best_score) = trace
        .iter()
        .copied()
        .reduce(|acc, t| {
            if t.1 < acc.1 || (t.1 == acc.1 && t.0.degrees() < acc.0.degrees()) {
                t
            } else {
                acc
            }
        })
        .expect("initial design is non-empty");
    Ok(BoResult {
        theta_min,
        best_score,
        trace,
    })
}
