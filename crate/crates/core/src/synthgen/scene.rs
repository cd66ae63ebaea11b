//! Procedural outdoor scenes with a strong canonical orientation.
//!
//! A scene is a bright sky gradient over darker textured ground, split by a
//! horizontal horizon, with up to three vertical blocks standing on the
//! ground line and an optional sun disc. Rendering uses 2x2 supersampling.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::SynthError;
use crate::raster::Image;

pub const MIN_SIDE: usize = 32;

type Rgb = [f32; 3];

/// A vertical block rising from the horizon. Positions are fractions of side.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneObject {
    pub center_x: f64,
    pub width: f64,
    pub height: f64,
    pub color: Rgb,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sun {
    pub x: f64,
    pub y: f64,
    pub radius: f64,
}

/// Full parameterization of one scene. Identical specs render identically.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub seed: u64,
    pub side: usize,
    /// Horizon height as a fraction of side, measured from the top.
    pub horizon: f64,
    pub sky_top: Rgb,
    pub sky_horizon: Rgb,
    pub ground_far: Rgb,
    pub ground_near: Rgb,
    pub texture_amplitude: f32,
    /// Spacing of horizontal ground furrows, as a fraction of side.
    pub furrow_period: f64,
    pub objects: Vec<SceneObject>,
    pub sun: Option<Sun>,
}

impl SceneSpec {
    /// Draws every scene parameter from `seed`.
    pub fn random(seed: u64, side: usize) -> SceneSpec {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let horizon = rng.random_range(0.45..0.65);

        let sky_top_l: f32 = rng.random_range(0.55..0.78);
        let sky_horizon_l: f32 = (sky_top_l + rng.random_range(0.08..0.2)).min(0.97);
        let blue: f32 = rng.random_range(0.0..0.15);
        let sky_top = [sky_top_l - blue, sky_top_l, sky_top_l + blue];
        let sky_horizon = [sky_horizon_l - blue * 0.5, sky_horizon_l, sky_horizon_l + blue * 0.3];

        let ground_l: f32 = rng.random_range(0.18..0.38);
        let tint: f32 = rng.random_range(-0.06..0.06);
        let ground_far = [ground_l + tint, ground_l + 0.04, ground_l - tint];
        let near_l = ground_l * rng.random_range(0.5..0.8);
        let ground_near = [near_l + tint, near_l + 0.03, near_l - tint];

        let texture_amplitude = rng.random_range(0.05..0.25);
        let furrow_period = rng.random_range(0.04..0.09);

        let count = rng.random_range(0..=3usize);
        let objects = (0..count)
            .map(|_| {
                let l: f32 = rng.random_range(0.05..0.45);
                SceneObject {
                    center_x: rng.random_range(0.1..0.9),
                    width: rng.random_range(0.05..0.14),
                    height: rng.random_range(0.12..0.35),
                    color: [l, l * rng.random_range(0.9..1.1), l * rng.random_range(0.8..1.0)],
                }
            })
            .collect();

        let sun = rng.random_bool(0.5).then(|| {
            let radius = rng.random_range(0.03..0.06);
            Sun {
                x: rng.random_range(0.2..0.8),
                y: rng.random_range(0.08..(horizon - 0.12)),
                radius,
            }
        });

        SceneSpec {
            seed,
            side,
            horizon,
            sky_top,
            sky_horizon,
            ground_far,
            ground_near,
            texture_amplitude,
            furrow_period,
            objects,
            sun,
        }
    }

    /// A perturbed copy: same layout and palette, shifted geometry and a new
    /// texture. Used to build groups of mutually relevant retrieval images.
    pub fn variant(&self, seed: u64) -> SceneSpec {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ self.seed.rotate_left(17));
        let mut out = self.clone();
        out.seed = seed;
        out.horizon = (self.horizon + rng.random_range(-0.03..0.03)).clamp(0.45, 0.65);
        let shade: f32 = rng.random_range(-0.04..0.04);
        for c in out
            .sky_top
            .iter_mut()
            .chain(out.sky_horizon.iter_mut())
            .chain(out.ground_far.iter_mut())
            .chain(out.ground_near.iter_mut())
        {
            *c = (*c + shade).clamp(0.0, 1.0);
        }
        for obj in &mut out.objects {
            obj.center_x = (obj.center_x + rng.random_range(-0.05..0.05)).clamp(0.1, 0.9);
            obj.height *= rng.random_range(0.85..1.15);
        }
        if let Some(sun) = &mut out.sun {
            sun.x = (sun.x + rng.random_range(-0.05..0.05)).clamp(0.1, 0.9);
        }
        out
    }
}

/// Renders a scene. The result is square RGB at `spec.side`.
pub fn gen_scene(spec: &SceneSpec) -> Result<Image, SynthError> {
    if spec.side < MIN_SIDE {
        return Err(SynthError::SideTooSmall(spec.side));
    }
    let side = spec.side;
    let s = side as f64;
    let noise = ValueNoise::new(spec.seed, 8);
    let horizon_px = spec.horizon * s;
    let mut data = Vec::with_capacity(side * side * 3);
    for py in 0..side {
        for px in 0..side {
            let mut acc = [0.0f32; 3];
            for sy in 0..2 {
                for sx in 0..2 {
                    let x = px as f64 + 0.25 + 0.5 * sx as f64;
                    let y = py as f64 + 0.25 + 0.5 * sy as f64;
                    let c = shade(spec, &noise, x / s, y / s, horizon_px / s);
                    for k in 0..3 {
                        acc[k] += c[k];
                    }
                }
            }
            data.extend(acc.iter().map(|v| v * 0.25));
        }
    }
    Ok(Image::new(side, side, 3, data).expect("scene dimensions"))
}

fn lerp(a: Rgb, b: Rgb, t: f32) -> Rgb {
    [
        a[0] + (b[0] - a[0]) * t,
        a[1] + (b[1] - a[1]) * t,
        a[2] + (b[2] - a[2]) * t,
    ]
}

/// Color at normalized coordinates `(u, v)`, `v` growing downward.
fn shade(spec: &SceneSpec, noise: &ValueNoise, u: f64, v: f64, horizon: f64) -> Rgb {
    for obj in &spec.objects {
        let half = obj.width / 2.0;
        if (u - obj.center_x).abs() <= half && v <= horizon && v >= horizon - obj.height {
            // Slight vertical shading keeps block faces from being flat.
            let t = ((horizon - v) / obj.height) as f32;
            return obj.color.map(|c| c * (0.85 + 0.15 * t));
        }
    }
    if v < horizon {
        if let Some(sun) = &spec.sun {
            if (u - sun.x).powi(2) + (v - sun.y).powi(2) <= sun.radius * sun.radius {
                return [1.0, 0.96, 0.82];
            }
        }
        lerp(spec.sky_top, spec.sky_horizon, (v / horizon) as f32)
    } else {
        let depth = ((v - horizon) / (1.0 - horizon)) as f32;
        let base = lerp(spec.ground_far, spec.ground_near, depth);
        let furrow = (std::f64::consts::TAU * (v - horizon) / spec.furrow_period).sin() as f32;
        let n = noise.at(u, v) as f32;
        let m = 1.0 + spec.texture_amplitude * (0.6 * n + 0.4 * furrow);
        base.map(|c| (c * m).clamp(0.0, 1.0))
    }
}

/// Smooth lattice noise in `[-1, 1]` over the unit square.
struct ValueNoise {
    cells: usize,
    lattice: Vec<f64>,
}

impl ValueNoise {
    fn new(seed: u64, cells: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
        let lattice = (0..(cells + 1) * (cells + 1))
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        ValueNoise { cells, lattice }
    }

    fn at(&self, u: f64, v: f64) -> f64 {
        let n = self.cells as f64;
        let x = (u * n).clamp(0.0, n - 1e-9);
        let y = (v * n).clamp(0.0, n - 1e-9);
        let (xi, yi) = (x.floor() as usize, y.floor() as usize);
        let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
        let (fx, fy) = (smooth(x - xi as f64), smooth(y - yi as f64));
        let stride = self.cells + 1;
        let l = |i: usize, j: usize| self.lattice[j * stride + i];
        let top = l(xi, yi) * (1.0 - fx) + l(xi + 1, yi) * fx;
        let bottom = l(xi, yi + 1) * (1.0 - fx) + l(xi + 1, yi + 1) * fx;
        top * (1.0 - fy) + bottom * fy
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn band_mean(img: &Image, y0: usize, y1: usize) -> f64 {
        let mut sum = 0.0;
        for y in y0..y1 {
            for x in 0..img.width() {
                for c in 0..3 {
                    sum += img.get(x, y, c) as f64;
                }
            }
        }
        sum / ((y1 - y0) * img.width() * 3) as f64
    }

    #[test]
    fn deterministic_in_seed() {
        let a = gen_scene(&SceneSpec::random(42, 64)).unwrap();
        let b = gen_scene(&SceneSpec::random(42, 64)).unwrap();
        let bits = |img: &Image| img.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        let c = gen_scene(&SceneSpec::random(43, 64)).unwrap();
        assert_ne!(a, c);
        assert_eq!((a.width(), a.height(), a.channels()), (64, 64, 3));
    }

    #[test]
    fn rejects_small_side() {
        assert!(matches!(
            gen_scene(&SceneSpec::random(1, 31)),
            Err(SynthError::SideTooSmall(31))
        ));
        assert!(gen_scene(&SceneSpec::random(1, 32)).is_ok());
    }

    #[test]
    fn sky_brighter_than_ground_over_many_seeds() {
        let side = 48;
        let brighter = (0..1000u64)
            .filter(|&seed| {
                let img = gen_scene(&SceneSpec::random(seed, side)).unwrap();
                band_mean(&img, 0, side / 4) > band_mean(&img, side - side / 4, side)
            })
            .count();
        assert!(brighter >= 950, "only {brighter}/1000 scenes had a brighter top");
    }

    #[test]
    fn horizon_within_range() {
        for seed in 0..200 {
            let spec = SceneSpec::random(seed, 64);
            assert!((0.45..0.65).contains(&spec.horizon));
            assert!(spec.objects.len() <= 3);
            let v = spec.variant(seed + 1000);
            assert!((0.45..=0.65).contains(&v.horizon));
            assert_eq!(v.objects.len(), spec.objects.len());
        }
    }
}
