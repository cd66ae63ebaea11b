//! HoG descriptor plus linear SVM: the classical baseline scorer.

mod hog;
mod svm;

pub use hog::{hog_features, HogConfig, HOG_EPSILON};
pub use svm::{platt_fit, svm_score, train_svm, SvmModel, SvmTrainConfig};

use thiserror::Error;

use crate::container::{ConfigBlob, Container, ContainerError, Tensor};

#[derive(Debug, Error)]
pub enum HogError {
    #[error("invalid HoG/SVM config: {0}")]
    Config(String),
    #[error("HoG needs a grayscale image, got {0} channels")]
    NotGrayscale(usize),
    #[error("{width}x{height} image is not divisible into {cell}-pixel cells")]
    Indivisible { width: usize, height: usize, cell: usize },
    #[error("feature has dimension {found}, expected {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("training set is empty")]
    EmptyDataset,
    #[error("training set has a single class; calibration is undefined")]
    SingleClass,
    #[error("model file: {0}")]
    Container(#[from] ContainerError),
}

impl SvmModel {
    pub fn to_container(&self) -> Container {
        let mut config = ConfigBlob::new();
        config.set("arch", "hogsvm");
        self.hog.write_blob(&mut config);
        Container {
            config,
            tensors: vec![
                Tensor::new("w", vec![self.w.len()], self.w.clone()),
                Tensor::scalar("bias", self.bias),
                Tensor::scalar("a", self.a),
                Tensor::scalar("b", self.b),
            ],
        }
    }

    pub fn from_container(container: &Container) -> Result<Self, HogError> {
        let hog = HogConfig::from_blob(&container.config)?;
        Ok(SvmModel {
            hog,
            w: container.tensor_with_shape("w", &[hog.dim()])?.values.clone(),
            bias: container.scalar("bias")?,
            a: container.scalar("a")?,
            b: container.scalar("b")?,
        })
    }
}

pub fn save_svm(model: &SvmModel) -> Vec<u8> {
    model.to_container().to_bytes()
}

pub fn load_svm(bytes: &[u8]) -> Result<SvmModel, HogError> {
    let container = Container::from_bytes(bytes)?;
    match container.config.get("arch") {
        Some("hogsvm") => SvmModel::from_container(&container),
        other => Err(HogError::Config(format!("not a HoG/SVM model: arch={other:?}"))),
    }
}
