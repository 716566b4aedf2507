//! Beer–Lambert conversion between 8-bit RGB intensities and optical density.
//!
//! The white point is fixed at `I0 = 255`. Zero intensities are clamped to 1
//! before taking the logarithm so every OD value stays finite and within
//! `[0, log10(255)]`.

use crate::error::{Error, Result};

/// Incident intensity of an 8-bit white pixel.
pub const WHITE: f64 = 255.0;

/// Default physical scale, 20x scans at 0.5 µm per pixel.
pub const DEFAULT_MICRONS_PER_PIXEL: f64 = 0.5;

/// Largest OD an 8-bit pixel can encode, `log10(255)`.
pub fn od_max() -> f64 {
    WHITE.log10()
}

/// 8-bit, 3-channel raster stored row-major as interleaved `R, G, B` bytes.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
    microns_per_pixel: f64,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>, microns_per_pixel: f64) -> Result<Self> {
        if pixels.len() != width * height * 3 {
            return Err(Error::InvalidImage(format!(
                "expected {} bytes for {width}x{height} RGB, got {}",
                width * height * 3,
                pixels.len()
            )));
        }
        check_scale(microns_per_pixel)?;
        Ok(Self { width, height, pixels, microns_per_pixel })
    }

    /// Uniformly filled image.
    pub fn filled(width: usize, height: usize, rgb: [u8; 3], microns_per_pixel: f64) -> Result<Self> {
        let pixels = rgb.iter().copied().cycle().take(width * height * 3).collect();
        Self::new(width, height, pixels, microns_per_pixel)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn microns_per_pixel(&self) -> f64 {
        self.microns_per_pixel
    }

    pub fn set_microns_per_pixel(&mut self, microns_per_pixel: f64) -> Result<()> {
        check_scale(microns_per_pixel)?;
        self.microns_per_pixel = microns_per_pixel;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Raw interleaved bytes.
    pub fn as_bytes(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.pixels
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn put_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn pixels(&self) -> impl Iterator<Item = [u8; 3]> + '_ {
        self.pixels.chunks_exact(3).map(|p| [p[0], p[1], p[2]])
    }
}

fn check_scale(microns_per_pixel: f64) -> Result<()> {
    if microns_per_pixel.is_finite() && microns_per_pixel > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidImage(format!("microns_per_pixel must be positive, got {microns_per_pixel}")))
    }
}

/// Optical-density image: three row-major planes, one per RGB channel.
#[derive(Debug, Clone, PartialEq)]
pub struct OdImage {
    width: usize,
    height: usize,
    planes: [Vec<f64>; 3],
    od_max: f64,
}

impl OdImage {
    /// Builds an OD image, clamping every value into `[0, od_max]`.
    pub fn from_planes(width: usize, height: usize, mut planes: [Vec<f64>; 3]) -> Result<Self> {
        let n = width * height;
        if planes.iter().any(|p| p.len() != n) {
            return Err(Error::InvalidImage(format!("OD planes must each hold {n} values")));
        }
        let od_max = od_max();
        for v in planes.iter_mut().flat_map(|p| p.iter_mut()) {
            *v = clamp_od(*v, od_max);
        }
        Ok(Self { width, height, planes, od_max })
    }

    /// Builds an OD image from per-pixel `[r, g, b]` densities (clamped).
    pub fn from_pixels(width: usize, height: usize, pixels: &[[f64; 3]]) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::InvalidImage(format!("expected {} OD pixels, got {}", width * height, pixels.len())));
        }
        let mut planes =
            [Vec::with_capacity(pixels.len()), Vec::with_capacity(pixels.len()), Vec::with_capacity(pixels.len())];
        for p in pixels {
            for (plane, v) in planes.iter_mut().zip(p) {
                plane.push(*v);
            }
        }
        Self::from_planes(width, height, planes)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn od_max(&self) -> f64 {
        self.od_max
    }

    pub fn planes(&self) -> &[Vec<f64>; 3] {
        &self.planes
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn pixel(&self, index: usize) -> [f64; 3] {
        [self.planes[0][index], self.planes[1][index], self.planes[2][index]]
    }

    pub fn pixels(&self) -> impl Iterator<Item = [f64; 3]> + '_ {
        (0..self.len()).map(|i| self.pixel(i))
    }
}

fn clamp_od(v: f64, od_max: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, od_max)
    }
}

/// OD of a single 8-bit intensity, `-log10(max(v, 1) / 255)`.
pub fn intensity_to_od(v: u8) -> f64 {
    -(f64::from(v.max(1)) / WHITE).log10()
}

/// Intensity of a single OD value, `round(255 * 10^-od)` clamped to `[0, 255]`.
///
/// `f64::round` rounds half away from zero.
pub fn od_to_intensity(od: f64) -> u8 {
    let v = (WHITE * 10f64.powf(-od)).round();
    v.clamp(0.0, WHITE) as u8
}

pub fn rgb_to_od(img: &RgbImage) -> OdImage {
    let lut: Vec<f64> = (0..=255u8).map(intensity_to_od).collect();
    let n = img.len();
    let mut planes = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    for (i, px) in img.pixels().enumerate() {
        for c in 0..3 {
            planes[c][i] = lut[px[c] as usize];
        }
    }
    OdImage { width: img.width, height: img.height, planes, od_max: od_max() }
}

pub fn od_to_rgb(od: &OdImage, microns_per_pixel: f64) -> Result<RgbImage> {
    let mut pixels = Vec::with_capacity(od.len() * 3);
    for i in 0..od.len() {
        for plane in &od.planes {
            pixels.push(od_to_intensity(plane[i]));
        }
    }
    RgbImage::new(od.width, od.height, pixels, microns_per_pixel)
}
