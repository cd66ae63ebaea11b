//! Estimation and compensation of large in-plane image rotations.
//!
//! A scorer maps an image to a "rotatedness" score in `(0, 1)`, low for
//! upright images. Compensation searches the circle of candidate angles for
//! the lowest score with Gaussian-process Bayesian optimization, then undoes
//! the estimated rotation.

pub mod angle;
pub mod container;
pub mod gpopt;
pub mod hogsvm;
pub mod pipeline;
pub mod raster;
pub mod scorer;
pub mod synthgen;
pub mod tnet;

pub use angle::{wrap_degrees, wrapped_distance, AngleDeg};
pub use raster::Image;
