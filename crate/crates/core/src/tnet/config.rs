use std::fmt;
use std::str::FromStr;

use super::TnetError;
use crate::container::ConfigBlob;

/// One convolution stage: conv + bias, ReLU, then optional max-pooling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub filters: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    /// Pooling window and stride; 1 disables pooling.
    pub pool: usize,
}

impl ConvSpec {
    pub const fn new(filters: usize, kernel: usize, stride: usize, padding: usize, pool: usize) -> Self {
        ConvSpec {
            filters,
            kernel,
            stride,
            padding,
            pool,
        }
    }
}

impl fmt::Display for ConvSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}:{}:{}:{}",
            self.filters, self.kernel, self.stride, self.padding, self.pool
        )
    }
}

impl FromStr for ConvSpec {
    type Err = TnetError;

    /// Parses `filters:kernel:stride:padding:pool`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<usize> = s
            .split(':')
            .map(|p| p.trim().parse::<usize>())
            .collect::<Result<_, _>>()
            .map_err(|_| TnetError::Config(format!("bad layer spec `{s}`")))?;
        match parts[..] {
            [filters, kernel, stride, padding, pool] => {
                Ok(ConvSpec::new(filters, kernel, stride, padding, pool))
            }
            _ => Err(TnetError::Config(format!(
                "layer spec `{s}` needs filters:kernel:stride:padding:pool"
            ))),
        }
    }
}

/// Shapes of one stage for a given input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageShape {
    pub in_channels: usize,
    pub in_side: usize,
    pub conv_side: usize,
    pub pool: usize,
    pub out_side: usize,
}

/// Architecture of a template network. The template kernel always spans the
/// whole feature map left by the conv stack, so its output is a scalar.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateNetConfig {
    pub input_side: usize,
    pub input_channels: usize,
    pub layers: Vec<ConvSpec>,
    /// When false, pooling in the second stage is skipped, which enlarges
    /// the template.
    pub use_pool2: bool,
}

impl Default for TemplateNetConfig {
    fn default() -> Self {
        TemplateNetConfig {
            input_side: 64,
            input_channels: 1,
            layers: vec![ConvSpec::new(8, 5, 2, 2, 2), ConvSpec::new(16, 5, 1, 2, 2)],
            use_pool2: true,
        }
    }
}

impl TemplateNetConfig {
    /// Pool size actually applied by stage `index`.
    pub fn effective_pool(&self, index: usize) -> usize {
        if index == 1 && !self.use_pool2 {
            1
        } else {
            self.layers[index].pool.max(1)
        }
    }

    pub fn stage_shapes(&self) -> Result<Vec<StageShape>, TnetError> {
        if self.input_side == 0 || self.input_channels == 0 {
            return Err(TnetError::Config("input side and channels must be positive".into()));
        }
        let mut shapes = Vec::with_capacity(self.layers.len());
        let mut channels = self.input_channels;
        let mut side = self.input_side;
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.filters == 0 || layer.kernel == 0 || layer.stride == 0 {
                return Err(TnetError::Config(format!("layer {i}: zero-sized parameter in {layer}")));
            }
            let padded = side + 2 * layer.padding;
            if padded < layer.kernel {
                return Err(TnetError::Config(format!(
                    "layer {i}: kernel {} exceeds padded input {padded}",
                    layer.kernel
                )));
            }
            let conv_side = (padded - layer.kernel) / layer.stride + 1;
            let pool = self.effective_pool(i);
            let out_side = conv_side / pool;
            if out_side == 0 {
                return Err(TnetError::Config(format!(
                    "layer {i}: pooling {pool} collapses a {conv_side}-pixel map"
                )));
            }
            shapes.push(StageShape {
                in_channels: channels,
                in_side: side,
                conv_side,
                pool,
                out_side,
            });
            channels = layer.filters;
            side = out_side;
        }
        Ok(shapes)
    }

    /// `(channels, side)` of the template kernel.
    pub fn template_shape(&self) -> Result<(usize, usize), TnetError> {
        let shapes = self.stage_shapes()?;
        Ok(match (shapes.last(), self.layers.last()) {
            (Some(s), Some(l)) => (l.filters, s.out_side),
            _ => (self.input_channels, self.input_side),
        })
    }

    pub fn input_len(&self) -> usize {
        self.input_channels * self.input_side * self.input_side
    }

    pub fn write_blob(&self, blob: &mut ConfigBlob) {
        let layers: Vec<String> = self.layers.iter().map(ToString::to_string).collect();
        blob.set("input_side", self.input_side)
            .set("input_channels", self.input_channels)
            .set("layers", layers.join(","))
            .set("use_pool2", self.use_pool2);
    }

    pub fn from_blob(blob: &ConfigBlob) -> Result<Self, TnetError> {
        let layers = blob.require("layers")?;
        let layers = if layers.trim().is_empty() {
            Vec::new()
        } else {
            layers.split(',').map(str::parse).collect::<Result<_, _>>()?
        };
        let cfg = TemplateNetConfig {
            input_side: blob.parse_value("input_side")?,
            input_channels: blob.parse_value("input_channels")?,
            layers,
            use_pool2: blob.parse_value("use_pool2")?,
        };
        cfg.stage_shapes()?;
        Ok(cfg)
    }
}
