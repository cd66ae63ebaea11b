//! Linear SVM trained by SGD on the regularized hinge loss, with a logistic
//! calibration of its decision values.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{HogConfig, HogError};
use crate::tnet::sigmoid;

#[derive(Debug, Clone, PartialEq)]
pub struct SvmTrainConfig {
    pub l2: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SvmTrainConfig {
    fn default() -> Self {
        SvmTrainConfig {
            l2: 1e-4,
            epochs: 20,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    pub hog: HogConfig,
    pub w: Vec<f32>,
    pub bias: f32,
    /// Calibration slope.
    pub a: f32,
    /// Calibration intercept.
    pub b: f32,
}

impl SvmModel {
    pub fn decision(&self, feat: &[f32]) -> Result<f64, HogError> {
        if feat.len() != self.w.len() {
            return Err(HogError::Dimension {
                expected: self.w.len(),
                found: feat.len(),
            });
        }
        Ok(dot(&self.w, feat) + f64::from(self.bias))
    }
}

fn dot(w: &[f32], x: &[f32]) -> f64 {
    w.iter().zip(x).map(|(&a, &b)| f64::from(a) * f64::from(b)).sum()
}

/// Calibrated score `σ(a·d + b)` of decision value `d`; label-1 samples
/// score high.
pub fn svm_score(model: &SvmModel, feat: &[f32]) -> Result<f64, HogError> {
    let d = model.decision(feat)?;
    Ok(sigmoid(f64::from(model.a) * d + f64::from(model.b)))
}

/// Trains on `(feature, label)` pairs, label 1 mapping to the positive class.
/// The result carries `hog` so it can describe images itself.
pub fn train_svm(samples: &[(Vec<f32>, u8)], cfg: &SvmTrainConfig, hog: HogConfig) -> Result<SvmModel, HogError> {
    let dim = samples.first().ok_or(HogError::EmptyDataset)?.0.len();
    if let Some((bad, _)) = samples.iter().find(|(f, _)| f.len() != dim) {
        return Err(HogError::Dimension {
            expected: dim,
            found: bad.len(),
        });
    }
    let positives = samples.iter().filter(|(_, l)| *l != 0).count();
    if positives == 0 || positives == samples.len() {
        return Err(HogError::SingleClass);
    }
    if !(cfg.l2 > 0.0 && cfg.l2.is_finite()) || cfg.epochs == 0 {
        return Err(HogError::Config("SVM needs l2 > 0 and at least one epoch".into()));
    }

    // SGD with step 1 / (l2 · (t + t0)), t0 chosen so the first step is 1.
    let t0 = 1.0 / cfg.l2;
    let mut w = vec![0.0f64; dim];
    let mut bias = 0.0f64;
    let mut t = 0.0f64;
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let (x, label) = &samples[i];
            let y = if *label != 0 { 1.0 } else { -1.0 };
            let eta = 1.0 / (cfg.l2 * (t + t0));
            let margin = y * (w.iter().zip(x).map(|(&a, &b)| a * f64::from(b)).sum::<f64>() + bias);
            let shrink = 1.0 - eta * cfg.l2;
            for wi in w.iter_mut() {
                *wi *= shrink;
            }
            if margin < 1.0 {
                for (wi, &xi) in w.iter_mut().zip(x) {
                    *wi += eta * y * f64::from(xi);
                }
                bias += eta * y;
            }
            t += 1.0;
        }
    }

    let mut model = SvmModel {
        hog,
        w: w.iter().map(|&v| v as f32).collect(),
        bias: bias as f32,
        a: 1.0,
        b: 0.0,
    };
    let decisions: Vec<f64> = samples
        .iter()
        .map(|(x, _)| model.decision(x))
        .collect::<Result<_, _>>()?;
    let labels: Vec<u8> = samples.iter().map(|&(_, l)| l).collect();
    let (a, b) = platt_fit(&decisions, &labels);
    model.a = a as f32;
    model.b = b as f32;
    Ok(model)
}

/// Fits `σ(a·d + b)` to the labels by Newton's method with backtracking.
/// Targets are smoothed to `(N₊+1)/(N₊+2)` and `1/(N₋+2)` so separable data
/// still has a finite optimum.
pub fn platt_fit(decisions: &[f64], labels: &[u8]) -> (f64, f64) {
    let pos = labels.iter().filter(|&&l| l != 0).count() as f64;
    let neg = labels.len() as f64 - pos;
    let hi = (pos + 1.0) / (pos + 2.0);
    let lo = 1.0 / (neg + 2.0);
    let targets: Vec<f64> = labels.iter().map(|&l| if l != 0 { hi } else { lo }).collect();

    // Cross-entropy of logit z against target t, stable for large |z|.
    let objective = |a: f64, b: f64| -> f64 {
        decisions
            .iter()
            .zip(&targets)
            .map(|(&d, &t)| {
                let z = a * d + b;
                let softplus = if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
                softplus - t * z
            })
            .sum()
    };

    let (mut a, mut b) = (1.0, 0.0);
    let mut f = objective(a, b);
    for _ in 0..100 {
        let (mut ga, mut gb) = (0.0, 0.0);
        let (mut haa, mut hab, mut hbb) = (1e-12, 0.0, 1e-12);
        for (&d, &t) in decisions.iter().zip(&targets) {
            let p = sigmoid(a * d + b);
            let r = p - t;
            ga += r * d;
            gb += r;
            let s = p * (1.0 - p);
            haa += s * d * d;
            hab += s * d;
            hbb += s;
        }
        if ga.abs() < 1e-10 && gb.abs() < 1e-10 {
            break;
        }
        let det = haa * hbb - hab * hab;
        let da = -(hbb * ga - hab * gb) / det;
        let db = -(haa * gb - hab * ga) / det;
        let slope = ga * da + gb * db;
        let mut step = 1.0;
        let mut improved = false;
        while step > 1e-10 {
            let (na, nb) = (a + step * da, b + step * db);
            let nf = objective(na, nb);
            if nf <= f + 1e-4 * step * slope {
                a = na;
                b = nb;
                f = nf;
                improved = true;
                break;
            }
            step /= 2.0;
        }
        if !improved {
            break;
        }
    }
    (a, b)
}
