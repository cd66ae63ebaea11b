//! Synthetic scenes and rotation-labeled datasets.
//!
//! Training sets take each upright image plus several uniformly random
//! circular rotations of it. Under [`Labeling::Strict`] only the unrotated
//! copy is labeled "absolute zero"; under [`Labeling::Tolerant`] every copy
//! within the tolerance of zero is.

mod manifest;
mod scene;

pub use manifest::{load_dataset_dir, load_image_dir, write_dataset_dir, DatasetEntry, MANIFEST_FILE, IMAGE_SUBDIR};
pub use scene::{gen_scene, SceneObject, SceneSpec, Sun, MIN_SIDE};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::raster::{rotate_circular, Image, RasterError};
use crate::AngleDeg;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("scene side {0} is below the minimum of 32 pixels")]
    SideTooSmall(usize),
    #[error("dataset needs at least one image")]
    EmptyInput,
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error("dataset I/O: {0}")]
    Io(String),
}

/// Default tolerance, in degrees, for [`Labeling::Tolerant`].
pub const DEFAULT_TOLERANCE_DEG: f64 = 10.0;

/// Label 0 means "absolute zero", 1 means "rotated".
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Labeling {
    Strict,
    Tolerant { tolerance_deg: f64 },
}

impl Labeling {
    pub fn tolerant() -> Self {
        Labeling::Tolerant {
            tolerance_deg: DEFAULT_TOLERANCE_DEG,
        }
    }

    pub fn label(&self, angle: AngleDeg) -> u8 {
        let upright = match *self {
            Labeling::Strict => angle.degrees() == 0.0,
            Labeling::Tolerant { tolerance_deg } => angle.degrees().abs() <= tolerance_deg,
        };
        u8::from(!upright)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub image: Image,
    pub label: u8,
    /// Ground truth, for evaluation only.
    pub true_angle: AngleDeg,
}

/// Scenes for seeds `seed, seed + 1, ...`, rendered in parallel.
pub fn gen_scenes(count: usize, side: usize, seed: u64) -> Result<Vec<Image>, SynthError> {
    (0..count as u64)
        .into_par_iter()
        .map(|i| gen_scene(&SceneSpec::random(seed.wrapping_add(i), side)))
        .collect()
}

/// Emits, per image, a masked unrotated copy plus `rotations_per_image`
/// copies at angles uniform over `[-180, 180)`. Output length is
/// `images.len() * (1 + rotations_per_image)`, grouped per source image.
pub fn build_rotation_dataset(
    images: &[Image],
    rotations_per_image: usize,
    labeling: Labeling,
    seed: u64,
) -> Result<Vec<LabeledSample>, SynthError> {
    if images.is_empty() {
        return Err(SynthError::EmptyInput);
    }
    // Angles are drawn up front so the parallel rotation below cannot
    // perturb the random stream.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jobs: Vec<(usize, AngleDeg)> = images
        .iter()
        .enumerate()
        .flat_map(|(i, _)| {
            let mut angles = vec![(i, AngleDeg::ZERO)];
            for _ in 0..rotations_per_image {
                angles.push((i, AngleDeg::new(rng.random_range(-180.0..180.0))));
            }
            angles
        })
        .collect();
    rotate_jobs(images, &jobs, labeling)
}

/// Every image at every angle, image-major. The label follows
/// [`Labeling::Strict`].
pub fn build_eval_set(images: &[Image], angles: &[AngleDeg]) -> Result<Vec<LabeledSample>, SynthError> {
    let jobs: Vec<(usize, AngleDeg)> = (0..images.len())
        .flat_map(|i| angles.iter().map(move |&a| (i, a)))
        .collect();
    rotate_jobs(images, &jobs, Labeling::Strict)
}

/// Re-applies a labeling rule without touching pixels.
pub fn relabel(samples: &mut [LabeledSample], labeling: Labeling) {
    for s in samples {
        s.label = labeling.label(s.true_angle);
    }
}

fn rotate_jobs(
    images: &[Image],
    jobs: &[(usize, AngleDeg)],
    labeling: Labeling,
) -> Result<Vec<LabeledSample>, SynthError> {
    jobs.par_iter()
        .map(|&(i, angle)| {
            Ok(LabeledSample {
                image: rotate_circular(&images[i], angle)?,
                label: labeling.label(angle),
                true_angle: angle,
            })
        })
        .collect()
}

/// `groups * per_group` scenes; members of a group are variants of one base
/// scene. Returns images with their group index, group-major.
pub fn gen_retrieval_set(
    groups: usize,
    per_group: usize,
    side: usize,
    seed: u64,
) -> Result<Vec<(Image, usize)>, SynthError> {
    let specs: Vec<(SceneSpec, usize)> = (0..groups)
        .flat_map(|g| {
            let base = SceneSpec::random(seed.wrapping_add(g as u64 * 7919), side);
            (0..per_group).map(move |m| {
                let spec = if m == 0 {
                    base.clone()
                } else {
                    base.variant(seed.wrapping_add((g * per_group + m) as u64))
                };
                (spec, g)
            })
        })
        .collect();
    specs
        .into_par_iter()
        .map(|(spec, g)| Ok((gen_scene(&spec)?, g)))
        .collect()
}

/// Angles `start, start + step, ...` strictly below `start + 360`.
pub fn angle_grid(start: f64, step: f64) -> Vec<AngleDeg> {
    assert!(step > 0.0, "angle step must be positive");
    let count = (360.0 / step).ceil() as usize;
    (0..count)
        .map(|i| start + i as f64 * step)
        .filter(|&a| a < start + 360.0 - 1e-9)
        .map(AngleDeg::new)
        .collect()
}
