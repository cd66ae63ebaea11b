//! Histogram-of-oriented-gradients descriptor.

use super::HogError;
use crate::container::ConfigBlob;
use crate::raster::Image;

/// Guards every normalization denominator.
pub const HOG_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HogConfig {
    /// Cell side in pixels.
    pub cell: usize,
    /// Unsigned orientation bins over [0°, 180°).
    pub bins: usize,
    /// Block side in cells; blocks step by one cell.
    pub block: usize,
    /// L2-Hys clipping level.
    pub clip: f64,
    /// Side of the (square) images the descriptor is computed on.
    pub input_side: usize,
}

impl Default for HogConfig {
    fn default() -> Self {
        HogConfig {
            cell: 8,
            bins: 9,
            block: 2,
            clip: 0.2,
            input_side: 64,
        }
    }
}

impl HogConfig {
    pub fn validate(&self) -> Result<(), HogError> {
        let bad = |m: String| Err(HogError::Config(m));
        if self.cell == 0 || self.bins == 0 || self.block == 0 {
            return bad("cell, bins and block must be positive".into());
        }
        if self.input_side == 0 || self.input_side % self.cell != 0 {
            return bad(format!(
                "input side {} is not a multiple of the cell size {}",
                self.input_side, self.cell
            ));
        }
        if self.input_side / self.cell < self.block {
            return bad(format!("a {}-cell block does not fit the image", self.block));
        }
        if !(self.clip > 0.0 && self.clip.is_finite()) {
            return bad("clip must be positive".into());
        }
        Ok(())
    }

    /// Descriptor length for a `side`×`side` image.
    pub fn dim_for(&self, side: usize) -> usize {
        let cells = side / self.cell;
        let blocks = (cells + 1).saturating_sub(self.block);
        blocks * blocks * self.block * self.block * self.bins
    }

    /// Descriptor length at `input_side`; 1764 for the defaults.
    pub fn dim(&self) -> usize {
        self.dim_for(self.input_side)
    }

    pub fn write_blob(&self, blob: &mut ConfigBlob) {
        blob.set("hog_cell", self.cell)
            .set("hog_bins", self.bins)
            .set("hog_block", self.block)
            .set("hog_clip", self.clip)
            .set("input_side", self.input_side);
    }

    pub fn from_blob(blob: &ConfigBlob) -> Result<Self, HogError> {
        let cfg = HogConfig {
            cell: blob.parse_value("hog_cell")?,
            bins: blob.parse_value("hog_bins")?,
            block: blob.parse_value("hog_block")?,
            clip: blob.parse_value("hog_clip")?,
            input_side: blob.parse_value("input_side")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Computes the block-major HoG descriptor of a grayscale image whose sides
/// are multiples of the cell size.
pub fn hog_features(img: &Image, cfg: &HogConfig) -> Result<Vec<f32>, HogError> {
    if img.channels() != 1 {
        return Err(HogError::NotGrayscale(img.channels()));
    }
    let (w, h) = (img.width(), img.height());
    if cfg.cell == 0 || cfg.bins == 0 || cfg.block == 0 || w % cfg.cell != 0 || h % cfg.cell != 0 {
        return Err(HogError::Indivisible {
            width: w,
            height: h,
            cell: cfg.cell,
        });
    }
    let (cx, cy) = (w / cfg.cell, h / cfg.cell);
    if cx < cfg.block || cy < cfg.block {
        return Err(HogError::Config(format!("{w}x{h} image is smaller than one block")));
    }

    let mut cells = vec![0.0f64; cx * cy * cfg.bins];
    let bin_width = 180.0 / cfg.bins as f64;
    let at = |x: usize, y: usize| f64::from(img.get(x, y, 0));
    for y in 0..h {
        for x in 0..w {
            let gx = at((x + 1).min(w - 1), y) - at(x.saturating_sub(1), y);
            let gy = at(x, (y + 1).min(h - 1)) - at(x, y.saturating_sub(1));
            let mag = gx.hypot(gy);
            if mag == 0.0 {
                continue;
            }
            // Bin b is centered on b * bin_width; the last bin wraps to the first.
            let pos = gy.atan2(gx).to_degrees().rem_euclid(180.0) / bin_width;
            let lo = pos.floor();
            let frac = pos - lo;
            let b0 = lo as usize % cfg.bins;
            let b1 = (b0 + 1) % cfg.bins;
            let base = ((y / cfg.cell) * cx + x / cfg.cell) * cfg.bins;
            cells[base + b0] += mag * (1.0 - frac);
            cells[base + b1] += mag * frac;
        }
    }

    let (bx, by) = (cx + 1 - cfg.block, cy + 1 - cfg.block);
    let block_len = cfg.block * cfg.block * cfg.bins;
    let mut out = Vec::with_capacity(bx * by * block_len);
    let mut block = vec![0.0f64; block_len];
    for y0 in 0..by {
        for x0 in 0..bx {
            let mut k = 0;
            for dy in 0..cfg.block {
                for dx in 0..cfg.block {
                    let base = ((y0 + dy) * cx + x0 + dx) * cfg.bins;
                    block[k..k + cfg.bins].copy_from_slice(&cells[base..base + cfg.bins]);
                    k += cfg.bins;
                }
            }
            l2_hys(&mut block, cfg.clip);
            out.extend(block.iter().map(|&v| v as f32));
        }
    }
    Ok(out)
}

fn l2_hys(v: &mut [f64], clip: f64) {
    let scale = |v: &mut [f64]| {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in v.iter_mut() {
            *x /= norm + HOG_EPSILON;
        }
    };
    scale(v);
    for x in v.iter_mut() {
        *x = x.min(clip);
    }
    scale(v);
}
