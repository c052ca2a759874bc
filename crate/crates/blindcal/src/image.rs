//! Binary netpbm images (P5 grayscale, P6 colour) with 8-bit samples.

use std::path::Path;

use crate::error::{Error, Result};

/// Planar image with samples in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    /// One row-major plane per channel (1 or 3).
    pub channels: Vec<Vec<f64>>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: Vec<Vec<f64>>) -> Result<Self> {
        if !(channels.len() == 1 || channels.len() == 3) {
            return Err(Error::Config(format!(
                "images have 1 or 3 channels, got {}",
                channels.len()
            )));
        }
        if width == 0 || height == 0 || channels.iter().any(|c| c.len() != width * height) {
            return Err(Error::Config(format!(
                "channel planes must hold {width}x{height} non-empty samples"
            )));
        }
        Ok(Image {
            width,
            height,
            channels,
        })
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }
}

fn quantise(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Encodes as P5 or P6 by channel count; samples are clamped to `[0, 1]`.
pub fn encode(image: &Image) -> Vec<u8> {
    let magic = if image.channels.len() == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", image.width, image.height).into_bytes();
    out.reserve(image.pixels() * image.channels.len());
    for k in 0..image.pixels() {
        for plane in &image.channels {
            out.push(quantise(plane[k]));
        }
    }
    out
}

pub fn write_image(path: &Path, image: &Image) -> Result<()> {
    std::fs::write(path, encode(image)).map_err(|e| Error::io(path, e))
}

pub fn read_image(path: &Path) -> Result<Image> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|msg| Error::format(path, msg))
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.bytes.get(self.pos).is_some_and(|&c| c != b'\n') {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> std::result::Result<usize, String> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| format!("bad {what} in header"))
    }
}

pub fn decode(bytes: &[u8]) -> std::result::Result<Image, String> {
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        _ => return Err("unsupported format: expected binary P5 or P6".into()),
    };
    let mut h = Header { bytes, pos: 2 };
    let width = h.number("width")?;
    let height = h.number("height")?;
    let maxval = h.number("maxval")?;
    if maxval != 255 {
        return Err(format!("unsupported maxval {maxval}: only 8-bit (255) images are read"));
    }
    if width == 0 || height == 0 {
        return Err("empty image".into());
    }
    // Exactly one whitespace byte separates the header from the raster.
    if !bytes.get(h.pos).is_some_and(u8::is_ascii_whitespace) {
        return Err("missing separator after maxval".into());
    }
    let raster = &bytes[h.pos + 1..];
    let len = width
        .checked_mul(height)
        .and_then(|v| v.checked_mul(channels))
        .ok_or("image dimensions overflow")?;
    if raster.len() < len {
        return Err(format!("raster truncated: {} of {len} bytes", raster.len()));
    }
    let mut planes = vec![Vec::with_capacity(width * height); channels];
    for px in raster[..len].chunks_exact(channels) {
        for (plane, &b) in planes.iter_mut().zip(px) {
            plane.push(b as f64 / 255.0);
        }
    }
    Ok(Image {
        width,
        height,
        channels: planes,
    })
}

/// Smooth shapes and edges, a stand-in for a natural image.
pub fn synthetic_image(width: usize, height: usize) -> Image {
    let mut plane = Vec::with_capacity(width * height);
    for r in 0..height {
        for c in 0..width {
            let u = (c as f64 + 0.5) / width as f64;
            let v = (r as f64 + 0.5) / height as f64;
            let blob = (-((u - 0.35).powi(2) + (v - 0.4).powi(2)) / 0.02).exp();
            let ring = ((u - 0.7).powi(2) + (v - 0.65).powi(2)).sqrt();
            let disc = if ring < 0.18 { 0.35 } else { 0.0 };
            let ramp = 0.15 + 0.3 * v;
            let stripes = if v > 0.8 && (12.0 * u).sin() > 0.0 { 0.1 } else { 0.0 };
            plane.push((ramp + 0.5 * blob + disc + stripes).clamp(0.0, 1.0));
        }
    }
    Image {
        width,
        height,
        channels: vec![plane],
    }
}
