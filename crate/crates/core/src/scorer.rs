//! One contract for "image to rotatedness score", whichever model backs it.
//!
//! Every image is first converted to grayscale, center-cropped to a square
//! and resized to the model's input side. Rotated candidates are scored as
//! produced by [`rotate_circular`], masked corners included.

use std::io::Write;

use rayon::prelude::*;
use thiserror::Error;

use crate::container::{Container, ContainerError};
use crate::hogsvm::{hog_features, svm_score, train_svm, HogConfig, HogError, SvmModel, SvmTrainConfig};
use crate::raster::{center_square_crop, resize_bilinear, rotate_circular, to_grayscale, Image, RasterError};
use crate::synthgen::{build_rotation_dataset, Labeling, LabeledSample, SynthError};
use crate::tnet::{TemplateNet, TnetError};
use crate::AngleDeg;

#[derive(Debug, Error)]
pub enum ScorerError {
    #[error(transparent)]
    Tnet(#[from] TnetError),
    #[error(transparent)]
    Hog(#[from] HogError),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("model file: {0}")]
    Container(#[from] ContainerError),
    #[error("unknown model architecture {0:?}")]
    UnknownArch(Option<String>),
    #[error("{0}")]
    EmptyInput(&'static str),
    #[error("CSV output: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScorerModel {
    TemplateNet(TemplateNet),
    HogSvm(SvmModel),
}

impl ScorerModel {
    pub fn arch(&self) -> &'static str {
        match self {
            ScorerModel::TemplateNet(_) => "tnet",
            ScorerModel::HogSvm(_) => "hogsvm",
        }
    }

    /// Side of the square grayscale image the model consumes.
    pub fn input_side(&self) -> usize {
        match self {
            ScorerModel::TemplateNet(net) => net.config().input_side,
            ScorerModel::HogSvm(m) => m.hog.input_side,
        }
    }

    pub fn preprocess(&self, img: &Image) -> Image {
        preprocess(img, self.input_side())
    }

    /// Score of an image already in the model's input format.
    pub fn score_prepared(&self, img: &Image) -> Result<f64, ScorerError> {
        Ok(match self {
            ScorerModel::TemplateNet(net) => net.forward(img)?,
            ScorerModel::HogSvm(m) => svm_score(m, &hog_features(img, &m.hog)?)?,
        })
    }

    pub fn to_container(&self) -> Container {
        match self {
            ScorerModel::TemplateNet(net) => net.to_container(),
            ScorerModel::HogSvm(m) => m.to_container(),
        }
    }
}

/// Grayscale, center square crop, then bilinear resize to `side`. Images
/// already in that form pass through unchanged.
pub fn preprocess(img: &Image, side: usize) -> Image {
    let gray = if img.channels() == 1 { img.clone() } else { to_grayscale(img) };
    let square = if gray.is_square() { gray } else { center_square_crop(&gray) };
    if square.width() == side {
        square
    } else {
        resize_bilinear(&square, side, side)
    }
}

pub fn score(model: &ScorerModel, img: &Image) -> Result<f64, ScorerError> {
    model.score_prepared(&model.preprocess(img))
}

/// Score of the preprocessed image circularly rotated by each angle, in the
/// order given.
pub fn score_curve(model: &ScorerModel, img: &Image, angles: &[AngleDeg]) -> Result<Vec<(AngleDeg, f64)>, ScorerError> {
    let prepared = model.preprocess(img);
    angles
        .iter()
        .map(|&a| Ok((a, model.score_prepared(&rotate_circular(&prepared, a)?)?)))
        .collect()
}

/// Per-angle lower median of [`score_curve`] over `imgs`.
pub fn median_curve(model: &ScorerModel, imgs: &[Image], angles: &[AngleDeg]) -> Result<Vec<(AngleDeg, f64)>, ScorerError> {
    if imgs.is_empty() {
        return Err(ScorerError::EmptyInput("median curve needs at least one image"));
    }
    let curves: Vec<Vec<(AngleDeg, f64)>> = imgs
        .par_iter()
        .map(|img| score_curve(model, img, angles))
        .collect::<Result<_, _>>()?;
    Ok(angles
        .iter()
        .enumerate()
        .map(|(i, &a)| {
            let mut column: Vec<f64> = curves.iter().map(|c| c[i].1).collect();
            column.sort_by(f64::total_cmp);
            (a, column[(column.len() - 1) / 2])
        })
        .collect())
}

/// Writes a curve as CSV with header `angle_deg,<value_name>`.
pub fn write_curve_csv<W: Write>(out: W, value_name: &str, curve: &[(AngleDeg, f64)]) -> Result<(), ScorerError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["angle_deg", value_name])?;
    for (a, s) in curve {
        w.write_record([a.degrees().to_string(), s.to_string()])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn save_scorer(model: &ScorerModel) -> Vec<u8> {
    model.to_container().to_bytes()
}

/// Loads either architecture, dispatching on the stored `arch` key.
pub fn load_scorer(bytes: &[u8]) -> Result<ScorerModel, ScorerError> {
    let container = Container::from_bytes(bytes)?;
    match container.config.get("arch") {
        Some("tnet") => Ok(ScorerModel::TemplateNet(TemplateNet::from_container(&container)?)),
        Some("hogsvm") => Ok(ScorerModel::HogSvm(SvmModel::from_container(&container)?)),
        other => Err(ScorerError::UnknownArch(other.map(str::to_string))),
    }
}

/// Preprocesses `images` to `side` and expands each into a rotation-labeled
/// group (see [`build_rotation_dataset`]).
pub fn build_training_set(
    images: &[Image],
    side: usize,
    rotations_per_image: usize,
    labeling: Labeling,
    seed: u64,
) -> Result<Vec<LabeledSample>, ScorerError> {
    let prepared: Vec<Image> = images.par_iter().map(|img| preprocess(img, side)).collect();
    Ok(build_rotation_dataset(&prepared, rotations_per_image, labeling, seed)?)
}

/// Extracts HoG features from prepared samples and trains the SVM on them.
pub fn train_hogsvm(samples: &[LabeledSample], cfg: &SvmTrainConfig, hog: HogConfig) -> Result<SvmModel, ScorerError> {
    hog.validate()?;
    let features: Vec<(Vec<f32>, u8)> = samples
        .par_iter()
        .map(|s| Ok((hog_features(&s.image, &hog)?, s.label)))
        .collect::<Result<_, HogError>>()?;
    Ok(train_svm(&features, cfg, hog)?)
}
