//! Template-layer convolutional scorer.
//!
//! A small conv stack followed by a *template* layer whose kernel covers the
//! entire final feature map, producing one scalar. A sigmoid maps it to a
//! rotatedness score: near 0 for upright images, near 1 for rotated ones.
//! Trained with binary cross-entropy and momentum SGD.

mod config;
mod engine;
mod train;

pub use config::{ConvSpec, StageShape, TemplateNetConfig};
pub use engine::{Params, Real};
pub use train::{mean_loss, train, TrainConfig, TrainReport};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::container::{ConfigBlob, Container, ContainerError, Tensor};
use crate::raster::Image;

#[derive(Debug, Error)]
pub enum TnetError {
    #[error("invalid network config: {0}")]
    Config(String),
    #[error("input is {width}x{height}x{channels}, network expects {side}x{side}x{expected_channels}")]
    InputShape {
        width: usize,
        height: usize,
        channels: usize,
        side: usize,
        expected_channels: usize,
    },
    #[error("training set is empty")]
    EmptyDataset,
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("invalid training config: {0}")]
    TrainConfig(String),
    #[error("model file: {0}")]
    Container(#[from] ContainerError),
}

/// Lower clamp for scores inside the loss.
pub const LOSS_EPSILON: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct TemplateNet {
    config: TemplateNetConfig,
    shapes: Vec<StageShape>,
    params: Params<f32>,
}

impl TemplateNet {
    /// A network with every parameter zero.
    pub fn zeros(config: TemplateNetConfig) -> Result<Self, TnetError> {
        let shapes = config.stage_shapes()?;
        let params = Params::zeros(&config);
        Ok(TemplateNet {
            config,
            shapes,
            params,
        })
    }

    /// He initialization (`N(0, 2 / fan_in)`) for every kernel, zero biases.
    pub fn init(config: TemplateNetConfig, seed: u64) -> Result<Self, TnetError> {
        let mut net = TemplateNet::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fan_ins: Vec<usize> = net
            .config
            .layers
            .iter()
            .zip(&net.shapes)
            .map(|(l, s)| s.in_channels * l.kernel * l.kernel)
            .collect();
        for (w, fan_in) in net.params.conv_weights.iter_mut().zip(fan_ins) {
            fill_normal(w, fan_in, &mut rng);
        }
        let fan_in = net.params.template.len();
        fill_normal(&mut net.params.template, fan_in, &mut rng);
        Ok(net)
    }

    pub fn from_params(config: TemplateNetConfig, params: Params<f32>) -> Result<Self, TnetError> {
        let shapes = config.stage_shapes()?;
        let expected = Params::<f32>::zeros(&config);
        for (a, b) in expected.tensors().iter().zip(params.tensors()) {
            if a.len() != b.len() {
                return Err(TnetError::Config(format!(
                    "parameter tensor has {} values, config needs {}",
                    b.len(),
                    a.len()
                )));
            }
        }
        Ok(TemplateNet {
            config,
            shapes,
            params,
        })
    }

    pub fn config(&self) -> &TemplateNetConfig {
        &self.config
    }

    pub fn params(&self) -> &Params<f32> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params<f32> {
        &mut self.params
    }

    fn check_input(&self, img: &Image) -> Result<(), TnetError> {
        let side = self.config.input_side;
        if img.width() != side || img.height() != side || img.channels() != self.config.input_channels {
            return Err(TnetError::InputShape {
                width: img.width(),
                height: img.height(),
                channels: img.channels(),
                side,
                expected_channels: self.config.input_channels,
            });
        }
        Ok(())
    }

    /// Converts the interleaved image into a channel-major buffer.
    fn planes<T: Real>(&self, img: &Image) -> Vec<T> {
        let c = img.channels();
        let n = img.width() * img.height();
        let data = img.data();
        let mut out = Vec::with_capacity(c * n);
        for ch in 0..c {
            out.extend((0..n).map(|i| T::from(data[i * c + ch]).expect("finite")));
        }
        out
    }

    /// Template-layer output before the sigmoid.
    pub fn logit(&self, img: &Image) -> Result<f64, TnetError> {
        self.check_input(img)?;
        let trace = engine::forward(&self.config, &self.shapes, &self.params, self.planes::<f32>(img));
        Ok(trace.logit as f64)
    }

    /// Rotatedness score in `(0, 1)`.
    pub fn forward(&self, img: &Image) -> Result<f64, TnetError> {
        self.logit(img).map(sigmoid)
    }

    /// Loss and exact parameter gradients, computed in precision `T`.
    pub fn gradients<T: Real>(&self, img: &Image, label: u8) -> Result<(f64, Params<T>), TnetError> {
        self.check_input(img)?;
        let params: Params<T> = self.params.cast();
        let (loss, grads) = self.gradients_with(&params, img, label);
        Ok((loss, grads))
    }

    pub(crate) fn gradients_with<T: Real>(&self, params: &Params<T>, img: &Image, label: u8) -> (f64, Params<T>) {
        let trace = engine::forward(&self.config, &self.shapes, params, self.planes::<T>(img));
        let logit = trace.logit.to_f64().expect("finite");
        let score = sigmoid(logit);
        let y = f64::from(label);
        // d(loss)/d(logit) for sigmoid + cross-entropy.
        let d_logit = T::from(score - y).expect("finite");
        let grads = engine::backward(&self.config, &self.shapes, params, &trace, d_logit);
        (loss(score, label), grads)
    }

    /// Loss evaluated with parameters of precision `T`; used by gradient
    /// checks.
    pub fn loss_with<T: Real>(&self, params: &Params<T>, img: &Image, label: u8) -> Result<f64, TnetError> {
        self.check_input(img)?;
        let trace = engine::forward(&self.config, &self.shapes, params, self.planes::<T>(img));
        Ok(loss(sigmoid(trace.logit.to_f64().expect("finite")), label))
    }

    /// ReLU signs and max-pool winners under `params`; the loss is smooth wherever these stay fixed.
    pub fn activation_pattern<T: Real>(&self, params: &Params<T>, img: &Image) -> Result<(Vec<bool>, Vec<usize>), TnetError> {
        self.check_input(img)?;
        Ok(engine::forward(&self.config, &self.shapes, params, self.planes::<T>(img)).pattern())
    }

    pub fn to_container(&self) -> Container {
        let mut config = ConfigBlob::new();
        config.set("arch", "tnet");
        self.config.write_blob(&mut config);
        let mut tensors = Vec::new();
        for (i, (layer, shape)) in self.config.layers.iter().zip(&self.shapes).enumerate() {
            tensors.push(Tensor::new(
                format!("conv{i}.weight"),
                vec![layer.filters, shape.in_channels, layer.kernel, layer.kernel],
                self.params.conv_weights[i].clone(),
            ));
            tensors.push(Tensor::new(
                format!("conv{i}.bias"),
                vec![layer.filters],
                self.params.conv_biases[i].clone(),
            ));
        }
        let (tc, ts) = self.config.template_shape().expect("validated config");
        tensors.push(Tensor::new("template.weight", vec![tc, ts, ts], self.params.template.clone()));
        tensors.push(Tensor::scalar("template.bias", self.params.template_bias[0]));
        Container { config, tensors }
    }

    pub fn from_container(container: &Container) -> Result<Self, TnetError> {
        let config = TemplateNetConfig::from_blob(&container.config)?;
        let shapes = config.stage_shapes()?;
        let mut params = Params::<f32>::zeros(&config);
        for (i, (layer, shape)) in config.layers.iter().zip(&shapes).enumerate() {
            params.conv_weights[i] = container
                .tensor_with_shape(
                    &format!("conv{i}.weight"),
                    &[layer.filters, shape.in_channels, layer.kernel, layer.kernel],
                )?
                .values
                .clone();
            params.conv_biases[i] = container
                .tensor_with_shape(&format!("conv{i}.bias"), &[layer.filters])?
                .values
                .clone();
        }
        let (tc, ts) = config.template_shape()?;
        params.template = container
            .tensor_with_shape("template.weight", &[tc, ts, ts])?
            .values
            .clone();
        params.template_bias = vec![container.scalar("template.bias")?];
        TemplateNet::from_params(config, params)
    }
}

pub fn save_model(net: &TemplateNet) -> Vec<u8> {
    net.to_container().to_bytes()
}

pub fn load_model(bytes: &[u8]) -> Result<TemplateNet, TnetError> {
    let container = Container::from_bytes(bytes)?;
    match container.config.get("arch") {
        Some("tnet") => TemplateNet::from_container(&container),
        other => Err(TnetError::Config(format!("not a template network: arch={other:?}"))),
    }
}

/// Logistic function, kept strictly inside `(0, 1)`.
pub fn sigmoid(x: f64) -> f64 {
    let s = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    s.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// Binary cross-entropy with the score clamped to `[1e-7, 1 - 1e-7]`.
pub fn loss(score: f64, label: u8) -> f64 {
    let s = score.clamp(LOSS_EPSILON, 1.0 - LOSS_EPSILON);
    if label == 0 {
        -(1.0 - s).ln()
    } else {
        -s.ln()
    }
}

fn fill_normal(values: &mut [f32], fan_in: usize, rng: &mut ChaCha8Rng) {
    let std = (2.0 / fan_in.max(1) as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("positive std");
    for v in values {
        *v = normal.sample(rng) as f32;
    }
}
