//! PNG and binary PNM (P5/P6) codecs.
//!
//! Intensities are stored as `round(v * 255)` clamped to `[0, 255]` and
//! decoded as `byte / maxval`. PNG support is limited to 8-bit grayscale and
//! RGB; the `png` crate handles the container and compression.

use std::io::{self, Cursor};
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use super::{Image, RasterError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    Png,
    /// Binary PNM: P5 for grayscale, P6 for RGB.
    Ppm,
}

impl ImageFormat {
    /// Guesses the format from a file extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        let ext = path.extension()?.to_str()?.to_ascii_lowercase();
        match ext.as_str() {
            "png" => Some(ImageFormat::Png),
            "ppm" | "pgm" | "pnm" => Some(ImageFormat::Ppm),
            _ => None,
        }
    }
}

impl FromStr for ImageFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "png" => Ok(ImageFormat::Png),
            "ppm" | "pgm" | "pnm" => Ok(ImageFormat::Ppm),
            other => Err(format!("unknown image format `{other}`")),
        }
    }
}

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("unsupported bit depth {0} (only 8-bit samples are supported)")]
    UnsupportedBitDepth(u32),
    #[error("unsupported color layout: {0}")]
    UnsupportedColor(String),
    #[error("truncated payload: {0}")]
    Truncated(String),
    #[error("invalid image: {0}")]
    Invalid(#[from] RasterError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub fn decode_image(bytes: &[u8], format: ImageFormat) -> Result<Image, DecodeError> {
    match format {
        ImageFormat::Png => decode_png(bytes),
        ImageFormat::Ppm => decode_pnm(bytes),
    }
}

/// Encodes an image. PNM output is P5 for one channel and P6 for three.
pub fn encode_image(img: &Image, format: ImageFormat) -> Vec<u8> {
    let payload: Vec<u8> = img.data().iter().map(|&v| quantize(v)).collect();
    match format {
        ImageFormat::Ppm => {
            let magic = if img.channels() == 1 { "P5" } else { "P6" };
            let mut out = format!("{magic}\n{} {}\n255\n", img.width(), img.height()).into_bytes();
            out.extend_from_slice(&payload);
            out
        }
        ImageFormat::Png => {
            let mut out = Vec::new();
            let mut encoder = png::Encoder::new(&mut out, img.width() as u32, img.height() as u32);
            encoder.set_color(if img.channels() == 1 {
                png::ColorType::Grayscale
            } else {
                png::ColorType::Rgb
            });
            encoder.set_depth(png::BitDepth::Eight);
            // Writing into a Vec cannot fail for a well-formed image.
            let mut writer = encoder.write_header().expect("png header");
            writer.write_image_data(&payload).expect("png payload");
            writer.finish().expect("png finish");
            out
        }
    }
}

/// Reads an image file, picking the codec from the extension.
pub fn read_image(path: &Path) -> Result<Image, DecodeError> {
    let format = ImageFormat::from_path(path).ok_or_else(|| {
        DecodeError::UnsupportedColor(format!("unknown extension for {}", path.display()))
    })?;
    let bytes = std::fs::read(path)?;
    decode_image(&bytes, format)
}

/// Writes an image file, picking the codec from the extension (PNG default).
pub fn write_image(path: &Path, img: &Image) -> io::Result<()> {
    let format = ImageFormat::from_path(path).unwrap_or(ImageFormat::Png);
    std::fs::write(path, encode_image(img, format))
}

#[inline]
fn quantize(v: f32) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

fn decode_png(bytes: &[u8]) -> Result<Image, DecodeError> {
    let decoder = png::Decoder::new(Cursor::new(bytes));
    let mut reader = decoder.read_info().map_err(|e| png_error(e, bytes.len()))?;
    let info = reader.info();
    let (width, height) = (info.width as usize, info.height as usize);
    if info.bit_depth != png::BitDepth::Eight {
        return Err(DecodeError::UnsupportedBitDepth(info.bit_depth as u32));
    }
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::Rgb => 3,
        other => return Err(DecodeError::UnsupportedColor(format!("{other:?}"))),
    };
    let expected = width * height * channels;
    let mut buf = vec![0u8; reader.output_buffer_size().unwrap_or(expected)];
    reader
        .next_frame(&mut buf)
        .map_err(|e| png_error(e, bytes.len()))?;
    buf.truncate(expected);
    let data = buf.iter().map(|&b| b as f32 / 255.0).collect();
    Ok(Image::new(width, height, channels, data)?)
}

fn png_error(err: png::DecodingError, found: usize) -> DecodeError {
    match err {
        png::DecodingError::IoError(e) if e.kind() == io::ErrorKind::UnexpectedEof => {
            DecodeError::Truncated(format!("png stream ends after {found} bytes"))
        }
        png::DecodingError::IoError(e) => DecodeError::Io(e),
        other => DecodeError::MalformedHeader(other.to_string()),
    }
}

/// Byte cursor over a PNM header.
struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderReader<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize, DecodeError> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(DecodeError::MalformedHeader(format!("missing {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| DecodeError::MalformedHeader(format!("bad {what}")))
    }
}

fn decode_pnm(bytes: &[u8]) -> Result<Image, DecodeError> {
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        _ => return Err(DecodeError::MalformedHeader("expected P5 or P6 magic".into())),
    };
    let mut header = HeaderReader { bytes, pos: 2 };
    let width = header.number("width")?;
    let height = header.number("height")?;
    let maxval = header.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(DecodeError::MalformedHeader(format!(
            "zero dimension {width}x{height}"
        )));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(DecodeError::MalformedHeader(format!("maxval {maxval}")));
    }
    if maxval > 255 {
        return Err(DecodeError::UnsupportedBitDepth(16));
    }
    // Exactly one whitespace byte separates the header from the raster.
    match bytes.get(header.pos) {
        Some(b) if b.is_ascii_whitespace() => header.pos += 1,
        _ => return Err(DecodeError::MalformedHeader("missing raster separator".into())),
    }
    let expected = width * height * channels;
    let payload = &bytes[header.pos..];
    if payload.len() < expected {
        return Err(DecodeError::Truncated(format!(
            "expected {expected} raster bytes, found {}",
            payload.len()
        )));
    }
    let scale = maxval as f32;
    let data = payload[..expected].iter().map(|&b| b as f32 / scale).collect();
    Ok(Image::new(width, height, channels, data)?)
}
