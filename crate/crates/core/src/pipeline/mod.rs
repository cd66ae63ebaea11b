//! End-to-end compensation, population statistics and retrieval harness.
//!
//! An estimate `theta_est` is the rotation the estimator believes the image
//! carries: the image is corrected by rotating it through `-theta_est`, and
//! an image rotated by `true_angle` is left with the residual
//! `wrap(true_angle - theta_est)`.

mod eval;
mod retrieval;

pub use eval::{
    bin_center, bin_index, eval_histogram, evaluate, fraction_within, histogram, io_likelihood, likelihood,
    record_metrics, run_metrics, write_histogram_csv, write_likelihood_csv, write_metrics_csv, EvalRecord,
    Histogram, Likelihood, RunMetrics, BIN_COUNT, BIN_WIDTH_DEG,
};
pub use retrieval::{
    average_precision, cosine_similarity, load_relevance_csv, maxpool_descriptors, read_descriptor,
    retrieval_eval, write_descriptor, write_map_csv, write_relevance_csv, DescriptorProvider, RetrievalMode,
    RetrievalSet,
};

use std::time::Instant;

use thiserror::Error;

use crate::gpopt::{bo_minimize, BoConfig, BoError, GpConfig};
use crate::raster::{rotate_circular, rotate_standard, Image, RasterError};
use crate::scorer::{ScorerError, ScorerModel};
use crate::AngleDeg;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Scorer(#[from] ScorerError),
    #[error(transparent)]
    Search(#[from] BoError),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error("{0}")]
    EmptyInput(&'static str),
    #[error("descriptor dimensions differ: {0} vs {1}")]
    Dimension(usize, usize),
    #[error("no descriptor for `{0}`")]
    MissingDescriptor(String),
    #[error("query `{0}` has no relevant dataset images")]
    EmptyRelevance(String),
    #[error("unknown image `{0}` in relevance list")]
    UnknownImage(String),
    #[error("average precision needs at least one relevant item")]
    NoRelevant,
    #[error("I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompensationResult {
    pub theta_est: AngleDeg,
    /// `rotate_standard(original, -theta_est, 0)`.
    pub corrected: Image,
    pub trace: Vec<(AngleDeg, f64)>,
    pub evaluations: usize,
    pub wall_time_s: f64,
}

/// Outcome of estimating one image's rotation.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub theta: AngleDeg,
    pub trace: Vec<(AngleDeg, f64)>,
}

/// Anything that can estimate the rotation an image carries.
pub trait Estimator: Sync {
    fn estimate(&self, img: &Image) -> Result<Estimate, PipelineError>;
}

/// Scorer plus Bayesian optimizer.
#[derive(Debug, Clone)]
pub struct Compensator {
    pub model: ScorerModel,
    pub bo: BoConfig,
    pub gp: GpConfig,
}

impl Compensator {
    pub fn new(model: ScorerModel, bo: BoConfig, gp: GpConfig) -> Self {
        Compensator { model, bo, gp }
    }
}

impl Estimator for Compensator {
    /// Minimizes the score of the preprocessed image de-rotated by each
    /// candidate angle.
    fn estimate(&self, img: &Image) -> Result<Estimate, PipelineError> {
        let prepared = self.model.preprocess(img);
        let oracle = |theta: AngleDeg| -> Result<f64, ScorerError> {
            self.model.score_prepared(&rotate_circular(&prepared, -theta)?)
        };
        let result = bo_minimize(oracle, &self.bo, &self.gp)?;
        Ok(Estimate {
            theta: result.theta_min,
            trace: result.trace,
        })
    }
}

/// Estimates the rotation of `img` and undoes it at full resolution.
pub fn compensate(model: &ScorerModel, img: &Image, bo: &BoConfig, gp: &GpConfig) -> Result<CompensationResult, PipelineError> {
    let comp = Compensator::new(model.clone(), bo.clone(), *gp);
    compensate_with(&comp, img)
}

pub fn compensate_with<E: Estimator + ?Sized>(estimator: &E, img: &Image) -> Result<CompensationResult, PipelineError> {
    let start = Instant::now();
    let est = estimator.estimate(img)?;
    let corrected = rotate_standard(img, -est.theta, 0.0);
    Ok(CompensationResult {
        theta_est: est.theta,
        corrected,
        evaluations: est.trace.len(),
        trace: est.trace,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hogsvm::{HogConfig, SvmModel};

    /// A model whose score is a fixed function of nothing but the input
    /// mean: constant images give constant oracles.
    fn flat_model() -> ScorerModel {
        ScorerModel::HogSvm(SvmModel {
            hog: HogConfig {
                input_side: 32,
                ..HogConfig::default()
            },
            w: vec![0.0; HogConfig { input_side: 32, ..HogConfig::default() }.dim()],
            bias: 0.0,
            a: 1.0,
            b: 0.0,
        })
    }

    #[test]
    fn result_invariants() {
        let img = Image::from_fn(40, 30, 3, |x, y, c| ((x + 2 * y + c) % 7) as f32 / 6.0).unwrap();
        let bo = BoConfig::default();
        let r = compensate(&flat_model(), &img, &bo, &GpConfig::default()).unwrap();
        assert_eq!(r.evaluations, r.trace.len());
        assert!(r.evaluations <= bo.max_evals);
        assert_eq!(r.corrected, rotate_standard(&img, -r.theta_est, 0.0));
        let best = r.trace.iter().map(|t| t.1).fold(f64::INFINITY, f64::min);
        assert!(r.trace.iter().any(|t| t.0 == r.theta_est && t.1 == best));
    }

    struct Fixed(f64);

    impl Estimator for Fixed {
        fn estimate(&self, _: &Image) -> Result<Estimate, PipelineError> {
            Ok(Estimate {
                theta: AngleDeg::new(self.0),
                trace: vec![(AngleDeg::new(self.0), 0.0)],
            })
        }
    }

    #[test]
    fn correction_undoes_the_estimate() {
        let img = Image::from_fn(21, 21, 1, |x, y, _| ((x * 5 + y) % 9) as f32 / 8.0).unwrap();
        let rotated = rotate_standard(&img, AngleDeg::new(90.0), 0.0);
        let r = compensate_with(&Fixed(90.0), &rotated).unwrap();
        assert_eq!(r.corrected, img);
    }
}
