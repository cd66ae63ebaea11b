//! Color conversion, cropping, resampling and rotation.
//!
//! Rotation convention: in raster coordinates (y grows downward) a positive
//! angle carries the pixel left of center to above center. Every rotation
//! is an inverse mapping: for each output pixel the source location is
//! computed and sampled bilinearly, with out-of-source corners reading as a
//! fill value.

use super::{clamp_unit, Image, RasterError};
use crate::AngleDeg;

/// Converts to a single channel with luma `0.299 R + 0.587 G + 0.114 B`.
pub fn to_grayscale(img: &Image) -> Image {
    if img.channels() == 1 {
        return img.clone();
    }
    let data = img
        .data()
        .chunks_exact(3)
        .map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2])
        .collect();
    Image::new(img.width(), img.height(), 1, data).expect("same dimensions")
}

/// Largest centered square, offset `floor((dim - side) / 2)` on each axis.
pub fn center_square_crop(img: &Image) -> Image {
    if img.is_square() {
        return img.clone();
    }
    let side = img.width().min(img.height());
    let x0 = (img.width() - side) / 2;
    let y0 = (img.height() - side) / 2;
    let c = img.channels();
    let mut data = Vec::with_capacity(side * side * c);
    for y in y0..y0 + side {
        let row = (y * img.width() + x0) * c;
        data.extend_from_slice(&img.data()[row..row + side * c]);
    }
    Image::new(side, side, c, data).expect("crop within bounds")
}

/// Bilinear resize with edge clamping. Output index `i` samples the source
/// at `(i + 0.5) * src / dst - 0.5`.
pub fn resize_bilinear(img: &Image, width: usize, height: usize) -> Image {
    assert!(width >= 1 && height >= 1, "resize target must be at least 1x1");
    if width == img.width() && height == img.height() {
        return img.clone();
    }
    let c = img.channels();
    let sx = img.width() as f64 / width as f64;
    let sy = img.height() as f64 / height as f64;
    let max_x = (img.width() - 1) as f64;
    let max_y = (img.height() - 1) as f64;
    let mut data = Vec::with_capacity(width * height * c);
    for oy in 0..height {
        let y = ((oy as f64 + 0.5) * sy - 0.5).clamp(0.0, max_y);
        let y0 = y.floor() as usize;
        let y1 = (y0 + 1).min(img.height() - 1);
        let fy = (y - y0 as f64) as f32;
        for ox in 0..width {
            let x = ((ox as f64 + 0.5) * sx - 0.5).clamp(0.0, max_x);
            let x0 = x.floor() as usize;
            let x1 = (x0 + 1).min(img.width() - 1);
            let fx = (x - x0 as f64) as f32;
            for ch in 0..c {
                let top = img.get(x0, y0, ch) * (1.0 - fx) + img.get(x1, y0, ch) * fx;
                let bottom = img.get(x0, y1, ch) * (1.0 - fx) + img.get(x1, y1, ch) * fx;
                data.push(clamp_unit(top * (1.0 - fy) + bottom * fy));
            }
        }
    }
    Image::new(width, height, c, data).expect("resize dimensions")
}

/// Bilinear sample at real-valued pixel coordinates. Corners outside the
/// image contribute 0.
pub fn bilinear_sample(img: &Image, x: f64, y: f64, ch: usize) -> f32 {
    sample_with_fill(img, x, y, ch, 0.0)
}

#[inline]
fn sample_with_fill(img: &Image, x: f64, y: f64, ch: usize, fill: f32) -> f32 {
    let xf = x.floor();
    let yf = y.floor();
    let fx = x - xf;
    let fy = y - yf;
    let (w, h) = (img.width() as i64, img.height() as i64);
    let (x0, y0) = (xf as i64, yf as i64);
    let pixel = |xi: i64, yi: i64| -> f64 {
        if xi < 0 || yi < 0 || xi >= w || yi >= h {
            fill as f64
        } else {
            img.get(xi as usize, yi as usize, ch) as f64
        }
    };
    let mut acc = 0.0;
    // Zero-weight corners are skipped so integer coordinates read exactly.
    for (dy, wy) in [(0, 1.0 - fy), (1, fy)] {
        if wy == 0.0 {
            continue;
        }
        for (dx, wx) in [(0, 1.0 - fx), (1, fx)] {
            if wx == 0.0 {
                continue;
            }
            acc += wx * wy * pixel(x0 + dx, y0 + dy);
        }
    }
    clamp_unit(acc as f32)
}

/// Rotates the inscribed disc of a square image.
///
/// With side `s` the center is `c = (s - 1) / 2` and the radius `s / 2`.
/// Output pixels outside the disc are 0; inside, the source is sampled at
/// `(cos t * dx + sin t * dy, -sin t * dx + cos t * dy)` relative to `c`.
/// On odd sides, multiples of 90 degrees are exact pixel permutations.
pub fn rotate_circular(img: &Image, theta: AngleDeg) -> Result<Image, RasterError> {
    if !img.is_square() {
        return Err(RasterError::NotSquare {
            width: img.width(),
            height: img.height(),
        });
    }
    let side = img.width();
    let channels = img.channels();
    let center = (side as f64 - 1.0) / 2.0;
    let r2 = (side as f64 / 2.0).powi(2);
    let (sin, cos) = theta.sin_cos();
    let mut data = vec![0.0f32; side * side * channels];
    for y in 0..side {
        let dy = y as f64 - center;
        for x in 0..side {
            let dx = x as f64 - center;
            if dx * dx + dy * dy > r2 {
                continue;
            }
            let sx = center + cos * dx + sin * dy;
            let sy = center - sin * dx + cos * dy;
            let base = (y * side + x) * channels;
            for ch in 0..channels {
                data[base + ch] = sample_with_fill(img, sx, sy, ch, 0.0);
            }
        }
    }
    Ok(Image::new(side, side, channels, data).expect("same dimensions"))
}

/// Conventional rotation onto a canvas enlarged to the rotated bounding box.
/// Samples that fall outside the source take `fill`.
pub fn rotate_standard(img: &Image, theta: AngleDeg, fill: f32) -> Image {
    let (sin, cos) = theta.sin_cos();
    let (w, h) = (img.width() as f64, img.height() as f64);
    let out_w = ((w * cos.abs() + h * sin.abs()).round() as usize).max(1);
    let out_h = ((w * sin.abs() + h * cos.abs()).round() as usize).max(1);
    let (cx, cy) = ((w - 1.0) / 2.0, (h - 1.0) / 2.0);
    let (ocx, ocy) = ((out_w as f64 - 1.0) / 2.0, (out_h as f64 - 1.0) / 2.0);
    let channels = img.channels();
    let fill = clamp_unit(fill);
    let mut data = Vec::with_capacity(out_w * out_h * channels);
    for y in 0..out_h {
        let dy = y as f64 - ocy;
        for x in 0..out_w {
            let dx = x as f64 - ocx;
            let sx = cx + cos * dx + sin * dy;
            let sy = cy - sin * dx + cos * dy;
            for ch in 0..channels {
                data.push(sample_with_fill(img, sx, sy, ch, fill));
            }
        }
    }
    Image::new(out_w, out_h, channels, data).expect("canvas dimensions")
}
