//! Mini-batch SGD with momentum and L2 weight decay.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::engine::Params;
use super::{TemplateNet, TemplateNetConfig, TnetError};
use crate::synthgen::LabeledSample;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Applied to kernels and templates, not to biases.
    pub weight_decay: f64,
    pub seed: u64,
    /// Compute per-sample gradients on the rayon pool. Partial gradients are
    /// still summed in sample order, so results do not depend on it.
    pub parallel: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            momentum: 0.9,
            batch_size: 32,
            epochs: 30,
            weight_decay: 1e-4,
            seed: 0,
            parallel: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TnetError> {
        let bad = |m: &str| Err(TnetError::TrainConfig(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight decay must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub net: TemplateNet,
    /// Mean loss over each epoch, measured while training.
    pub epoch_losses: Vec<f64>,
}

/// Trains a freshly initialized network. Samples must already be in the
/// network's input format.
pub fn train(
    data: &[LabeledSample],
    cfg: &TrainConfig,
    netcfg: &TemplateNetConfig,
) -> Result<TrainReport, TnetError> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(TnetError::EmptyDataset);
    }
    let mut net = TemplateNet::init(netcfg.clone(), cfg.seed)?;
    for s in data {
        net.check_input(&s.image)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut velocity = Params::<f32>::zeros(netcfg);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (batch_index, batch) in order.chunks(cfg.batch_size).enumerate() {
            let per_sample = |&i: &usize| {
                let s = &data[i];
                net.gradients_with(&net.params, &s.image, s.label)
            };
            let partials: Vec<(f64, Params<f32>)> = if cfg.parallel {
                batch.par_iter().map(per_sample).collect()
            } else {
                batch.iter().map(per_sample).collect()
            };
            let mut grad = Params::<f32>::zeros(netcfg);
            let mut batch_loss = 0.0;
            for (l, g) in &partials {
                batch_loss += l;
                grad.add_assign(g);
            }
            if !batch_loss.is_finite() {
                return Err(TnetError::NonFiniteLoss {
                    epoch,
                    batch: batch_index,
                });
            }
            epoch_loss += batch_loss;
            sgd_step(&mut net.params, &mut velocity, &grad, batch.len(), cfg);
        }
        epoch_losses.push(epoch_loss / data.len() as f64);
    }
    Ok(TrainReport { net, epoch_losses })
}

fn sgd_step(params: &mut Params<f32>, velocity: &mut Params<f32>, grad: &Params<f32>, batch: usize, cfg: &TrainConfig) {
    let lr = cfg.learning_rate as f32;
    let mu = cfg.momentum as f32;
    let wd = cfg.weight_decay as f32;
    let scale = 1.0 / batch as f32;
    // Tensors alternate kernel, bias, ..., template, template bias.
    for (k, ((p, v), g)) in params
        .tensors_mut()
        .into_iter()
        .zip(velocity.tensors_mut())
        .zip(grad.tensors())
        .enumerate()
    {
        let decay = if k % 2 == 0 { wd } else { 0.0 };
        for ((w, vel), &gr) in p.iter_mut().zip(v.iter_mut()).zip(g) {
            *vel = mu * *vel - lr * (gr * scale + decay * *w);
            *w += *vel;
        }
    }
}

/// Mean loss of `net` over `data`.
pub fn mean_loss(net: &TemplateNet, data: &[LabeledSample]) -> Result<f64, TnetError> {
    let mut total = 0.0;
    for s in data {
        total += super::loss(net.forward(&s.image)?, s.label);
    }
    Ok(total / data.len().max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tnet::ConvSpec;
    use crate::raster::Image;
    use crate::AngleDeg;

    fn tiny_cfg() -> TemplateNetConfig {
        TemplateNetConfig {
            input_side: 12,
            input_channels: 1,
            layers: vec![ConvSpec::new(2, 3, 1, 1, 2)],
            use_pool2: true,
        }
    }

    fn toy_data(n: usize) -> Vec<LabeledSample> {
        (0..n)
            .map(|i| {
                let label = (i % 2) as u8;
                let image = Image::from_fn(12, 12, 1, |x, y, _| {
                    let t = if label == 0 { y } else { x };
                    ((t as f32 / 11.0) + ((x * y + i) % 5) as f32 * 0.02).min(1.0)
                })
                .unwrap();
                LabeledSample {
                    image,
                    label,
                    true_angle: AngleDeg::ZERO,
                }
            })
            .collect()
    }

    #[test]
    fn validates_inputs() {
        assert!(matches!(
            train(&[], &TrainConfig::default(), &tiny_cfg()),
            Err(TnetError::EmptyDataset)
        ));
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(matches!(train(&toy_data(4), &cfg, &tiny_cfg()), Err(TnetError::TrainConfig(_))));
    }

    #[test]
    fn parallel_and_serial_agree_bitwise() {
        let data = toy_data(20);
        let base = TrainConfig {
            epochs: 3,
            batch_size: 7,
            seed: 4,
            ..TrainConfig::default()
        };
        let a = train(&data, &base, &tiny_cfg()).unwrap();
        let b = train(&data, &TrainConfig { parallel: false, ..base.clone() }, &tiny_cfg()).unwrap();
        let c = train(&data, &base, &tiny_cfg()).unwrap();
        assert_eq!(a.net, b.net);
        assert_eq!(a.net, c.net);
        assert_eq!(a.epoch_losses, b.epoch_losses);
    }

    #[test]
    fn learns_toy_orientation() {
        let data = toy_data(40);
        let cfg = TrainConfig {
            epochs: 40,
            batch_size: 8,
            learning_rate: 0.05,
            seed: 1,
            ..TrainConfig::default()
        };
        let before = mean_loss(&TemplateNet::init(tiny_cfg(), cfg.seed).unwrap(), &data).unwrap();
        let report = train(&data, &cfg, &tiny_cfg()).unwrap();
        let after = mean_loss(&report.net, &data).unwrap();
        assert!(after < 0.5 * before, "loss {before} -> {after}");
        assert_eq!(report.epoch_losses.len(), 40);
    }

    #[test]
    fn diverging_training_is_reported() {
        let cfg = TrainConfig {
            learning_rate: 1e30,
            epochs: 5,
            batch_size: 4,
            ..TrainConfig::default()
        };
        let err = train(&toy_data(8), &cfg, &tiny_cfg());
        assert!(matches!(err, Err(TnetError::NonFiniteLoss { .. })), "{err:?}");
    }
}
