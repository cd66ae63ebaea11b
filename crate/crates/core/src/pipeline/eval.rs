//! Population statistics over compensated test sets.

use std::io::Write;

use rayon::prelude::*;

use super::{compensate_with, Estimator, PipelineError};
use crate::synthgen::LabeledSample;
use crate::{wrap_degrees, wrapped_distance, AngleDeg};

pub const BIN_COUNT: usize = 36;
pub const BIN_WIDTH_DEG: f64 = 10.0;

/// Bin of an angle; bin `k` is centered on `-180 + 10k` degrees.
pub fn bin_index(angle: AngleDeg) -> usize {
    let pos = ((angle.degrees() + 180.0) / BIN_WIDTH_DEG + 0.5).floor() as usize;
    pos % BIN_COUNT
}

pub fn bin_center(index: usize) -> f64 {
    -180.0 + BIN_WIDTH_DEG * index as f64
}

/// One compensated test sample.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub true_angle: AngleDeg,
    pub theta_est: AngleDeg,
    pub evaluations: usize,
    pub wall_time_s: f64,
}

impl EvalRecord {
    /// Rotation left after correction: `wrap(true_angle - theta_est)`.
    pub fn residual(&self) -> AngleDeg {
        AngleDeg::new(wrap_degrees(self.true_angle.degrees() - self.theta_est.degrees()))
    }
}

/// Compensates every sample, in parallel, keeping input order.
pub fn evaluate<E: Estimator + ?Sized>(estimator: &E, testset: &[LabeledSample]) -> Result<Vec<EvalRecord>, PipelineError> {
    testset
        .par_iter()
        .map(|s| {
            let r = compensate_with(estimator, &s.image)?;
            Ok(EvalRecord {
                true_angle: s.true_angle,
                theta_est: r.theta_est,
                evaluations: r.evaluations,
                wall_time_s: r.wall_time_s,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub counts: Vec<usize>,
    /// Counts normalized to sum to 1.
    pub frequencies: Vec<f64>,
}

impl Histogram {
    /// Bin with the most mass (lowest index on ties).
    pub fn mode(&self) -> usize {
        let mut best = 0;
        for (i, &c) in self.counts.iter().enumerate() {
            if c > self.counts[best] {
                best = i;
            }
        }
        best
    }
}

pub fn histogram<I: IntoIterator<Item = AngleDeg>>(angles: I) -> Histogram {
    let mut counts = vec![0usize; BIN_COUNT];
    for a in angles {
        counts[bin_index(a)] += 1;
    }
    let total = counts.iter().sum::<usize>().max(1) as f64;
    let frequencies = counts.iter().map(|&c| c as f64 / total).collect();
    Histogram { counts, frequencies }
}

/// Histogram of residual angles after compensation.
pub fn eval_histogram<E: Estimator + ?Sized>(estimator: &E, testset: &[LabeledSample]) -> Result<Histogram, PipelineError> {
    Ok(histogram(evaluate(estimator, testset)?.iter().map(EvalRecord::residual)))
}

/// Conditional frequency of each output bin given the input angle.
#[derive(Debug, Clone, PartialEq)]
pub struct Likelihood {
    /// Distinct input angles, ascending.
    pub inputs: Vec<AngleDeg>,
    /// One row per input, `BIN_COUNT` columns, each row summing to 1.
    pub rows: Vec<Vec<f64>>,
}

pub fn likelihood(records: &[EvalRecord]) -> Likelihood {
    let mut inputs: Vec<AngleDeg> = records.iter().map(|r| r.true_angle).collect();
    inputs.sort_by(|a, b| a.degrees().total_cmp(&b.degrees()));
    inputs.dedup();
    let rows = inputs
        .iter()
        .map(|&input| histogram(records.iter().filter(|r| r.true_angle == input).map(EvalRecord::residual)).frequencies)
        .collect();
    Likelihood { inputs, rows }
}

pub fn io_likelihood<E: Estimator + ?Sized>(estimator: &E, testset: &[LabeledSample]) -> Result<Likelihood, PipelineError> {
    Ok(likelihood(&evaluate(estimator, testset)?))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunMetrics {
    pub mean_evaluations: f64,
    pub mean_wall_time_s: f64,
}

fn means(items: impl ExactSizeIterator<Item = (usize, f64)>) -> Result<RunMetrics, PipelineError> {
    let n = items.len();
    if n == 0 {
        return Err(PipelineError::EmptyInput("metrics need at least one result"));
    }
    let (evals, wall) = items.fold((0usize, 0.0), |(e, w), (de, dw)| (e + de, w + dw));
    Ok(RunMetrics {
        mean_evaluations: evals as f64 / n as f64,
        mean_wall_time_s: wall / n as f64,
    })
}

pub fn run_metrics(results: &[super::CompensationResult]) -> Result<RunMetrics, PipelineError> {
    means(results.iter().map(|r| (r.evaluations, r.wall_time_s)))
}

pub fn record_metrics(records: &[EvalRecord]) -> Result<RunMetrics, PipelineError> {
    means(records.iter().map(|r| (r.evaluations, r.wall_time_s)))
}

/// Share of records whose residual is within `tolerance_deg` of zero.
pub fn fraction_within(records: &[EvalRecord], tolerance_deg: f64) -> f64 {
    let hits = records
        .iter()
        .filter(|r| wrapped_distance(r.residual(), AngleDeg::ZERO) <= tolerance_deg)
        .count();
    hits as f64 / records.len().max(1) as f64
}

/// CSV `bin_center_deg,frequency`.
pub fn write_histogram_csv<W: Write>(out: W, hist: &Histogram) -> Result<(), PipelineError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["bin_center_deg", "frequency"])?;
    for (i, f) in hist.frequencies.iter().enumerate() {
        w.write_record([bin_center(i).to_string(), f.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Matrix CSV: header `input_angle_deg` then one column per bin center.
pub fn write_likelihood_csv<W: Write>(out: W, lik: &Likelihood) -> Result<(), PipelineError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["input_angle_deg".to_string()];
    header.extend((0..BIN_COUNT).map(|i| bin_center(i).to_string()));
    w.write_record(&header)?;
    for (input, row) in lik.inputs.iter().zip(&lik.rows) {
        let mut rec = vec![input.degrees().to_string()];
        rec.extend(row.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// CSV of the deterministic summary of an evaluation run. Wall time is
/// left out so repeated runs produce identical files.
pub fn write_metrics_csv<W: Write>(out: W, records: &[EvalRecord]) -> Result<(), PipelineError> {
    let m = record_metrics(records)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["samples", "mean_evaluations", "within_10_deg", "mode_bin_center_deg"])?;
    let hist = histogram(records.iter().map(EvalRecord::residual));
    w.write_record([
        records.len().to_string(),
        m.mean_evaluations.to_string(),
        fraction_within(records, 10.0).to_string(),
        bin_center(hist.mode()).to_string(),
    ])?;
    w.flush()?;
    Ok(())
}
