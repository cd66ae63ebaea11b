//! Raster images, codecs and geometric resampling.
//!
//! Images hold normalized intensities in `[0, 1]`, row-major with channels
//! interleaved. Every operation in this module returns a fresh image and
//! clamps its output back into the unit interval.

mod codec;
mod geometry;

pub use codec::{decode_image, encode_image, read_image, write_image, DecodeError, ImageFormat};
pub use geometry::{
    bilinear_sample, center_square_crop, resize_bilinear, rotate_circular, rotate_standard,
    to_grayscale,
};

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RasterError {
    #[error("image dimensions must be at least 1x1, got {width}x{height}")]
    EmptyImage { width: usize, height: usize },
    #[error("unsupported channel count {0} (expected 1 or 3)")]
    Channels(usize),
    #[error("data length {actual} does not match {width}x{height}x{channels}")]
    DataLength {
        width: usize,
        height: usize,
        channels: usize,
        actual: usize,
    },
    #[error("circular rotation needs a square image, got {width}x{height}")]
    NotSquare { width: usize, height: usize },
}

/// A row-major raster of intensities in `[0, 1]` with 1 or 3 channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
}

impl Image {
    /// Builds an image, clamping every intensity into `[0, 1]`.
    pub fn new(
        width: usize,
        height: usize,
        channels: usize,
        mut data: Vec<f32>,
    ) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::EmptyImage { width, height });
        }
        if channels != 1 && channels != 3 {
            return Err(RasterError::Channels(channels));
        }
        if data.len() != width * height * channels {
            return Err(RasterError::DataLength {
                width,
                height,
                channels,
                actual: data.len(),
            });
        }
        for v in &mut data {
            *v = clamp_unit(*v);
        }
        Ok(Image {
            width,
            height,
            channels,
            data,
        })
    }

    /// An all-zero image.
    pub fn zeros(width: usize, height: usize, channels: usize) -> Result<Self, RasterError> {
        Image::new(width, height, channels, vec![0.0; width * height * channels])
    }

    /// Builds an image by evaluating `f(x, y, channel)` at every sample.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Result<Self, RasterError> {
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c));
                }
            }
        }
        Image::new(width, height, channels, data)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn is_square(&self) -> bool {
        self.width == self.height
    }

    #[inline]
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, ch: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + ch]
    }

    pub fn set(&mut self, x: usize, y: usize, ch: usize, value: f32) {
        let idx = (y * self.width + x) * self.channels + ch;
        self.data[idx] = clamp_unit(value);
    }

    /// Mean intensity over all samples.
    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }
}

#[inline]
pub(crate) fn clamp_unit(v: f32) -> f32 {
    // NaN maps to 0 so downstream code never sees it.
    if v > 0.0 {
        v.min(1.0)
    } else {
        0.0
    }
}
