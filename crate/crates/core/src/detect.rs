//! Nucleus center detection on the hematoxylin plane: Gaussian smoothing,
//! 8-neighborhood local maxima, then greedy minimum-distance suppression.

use serde::{Deserialize, Serialize};

use crate::deconv::ConcentrationImage;
use crate::error::{Error, Result};
use crate::io::CenterRecord;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    pub sigma_px: f64,
    pub threshold: f64,
    pub min_distance_px: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self { sigma_px: 2.0, threshold: 0.1, min_distance_px: 5.0 }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_px.is_finite() && self.sigma_px > 0.0) {
            return Err(Error::InvalidConfig(format!("sigma_px must be > 0, got {}", self.sigma_px)));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::InvalidConfig(format!("threshold must be in [0, 1], got {}", self.threshold)));
        }
        if !(self.min_distance_px.is_finite() && self.min_distance_px >= 1.0) {
            return Err(Error::InvalidConfig(format!("min_distance_px must be >= 1, got {}", self.min_distance_px)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DetectionList {
    pub centers: Vec<(f64, f64)>,
    pub scores: Vec<f64>,
}

impl DetectionList {
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn records(&self) -> Vec<CenterRecord> {
        self.centers.iter().zip(&self.scores).map(|(&(x, y), &s)| CenterRecord { x, y, score: Some(s) }).collect()
    }
}

/// Normalized Gaussian taps for offsets `-radius..=radius`, radius `⌈3σ⌉`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let taps: Vec<f64> = (-radius..=radius).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let sum: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / sum).collect()
}

/// Mirror index for `d c b a | a b c d | d c b a` borders.
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let mut i = i.rem_euclid(period);
    if i >= n {
        i = period - 1 - i;
    }
    i as usize
}

/// Separable Gaussian blur with reflected borders.
pub fn gaussian_smooth(plane: &[f64], width: usize, height: usize, sigma: f64) -> Vec<f64> {
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as isize;
    let mut tmp = vec![0.0; plane.len()];
    for y in 0..height {
        let row = &plane[y * width..(y + 1) * width];
        for x in 0..width {
            let mut acc = 0.0;
            for (k, w) in kernel.iter().enumerate() {
                acc += w * row[reflect(x as isize + k as isize - radius, width)];
            }
            tmp[y * width + x] = acc;
        }
    }
    let mut out = vec![0.0; plane.len()];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            for (k, w) in kernel.iter().enumerate() {
                acc += w * tmp[reflect(y as isize + k as isize - radius, height) * width + x];
            }
            out[y * width + x] = acc;
        }
    }
    out
}

/// Local maxima of `values` over the 8-neighborhood. A pixel must exceed
/// every neighbor, except that an equal neighbor later in row-major order
/// does not disqualify it, so a plateau yields its first pixel only.
fn local_maxima(values: &[f64], width: usize, height: usize, threshold: f64) -> Vec<usize> {
    let mut peaks = Vec::new();
    for y in 0..height {
        for x in 0..width {
            let i = y * width + x;
            let v = values[i];
            if v < threshold || v <= 0.0 {
                continue;
            }
            let mut is_peak = true;
            'scan: for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let (nx, ny) = (x as isize + dx, y as isize + dy);
                    if nx < 0 || ny < 0 || nx >= width as isize || ny >= height as isize {
                        continue;
                    }
                    let j = ny as usize * width + nx as usize;
                    let u = values[j];
                    if u > v || (u == v && j < i) {
                        is_peak = false;
                        break 'scan;
                    }
                }
            }
            if is_peak {
                peaks.push(i);
            }
        }
    }
    peaks
}

pub fn detect_nuclei(conc: &ConcentrationImage, cfg: &DetectorConfig) -> Result<DetectionList> {
    cfg.validate()?;
    Ok(detect_in_plane(conc.h_plane(), conc.width(), conc.height(), cfg))
}

/// Detection on an arbitrary plane; `cfg` is assumed valid.
pub fn detect_in_plane(plane: &[f64], width: usize, height: usize, cfg: &DetectorConfig) -> DetectionList {
    if width == 0 || height == 0 {
        return DetectionList::default();
    }
    let smooth = gaussian_smooth(plane, width, height, cfg.sigma_px);
    let mut peaks = local_maxima(&smooth, width, height, cfg.threshold);
    // strongest first, row-major order among equal scores
    peaks.sort_by(|&a, &b| smooth[b].total_cmp(&smooth[a]).then(a.cmp(&b)));

    let min_d2 = cfg.min_distance_px * cfg.min_distance_px;
    let mut kept: Vec<usize> = Vec::new();
    for p in peaks {
        let (px, py) = ((p % width) as f64, (p / width) as f64);
        let suppressed = kept.iter().any(|&q| {
            let (qx, qy) = ((q % width) as f64, (q / width) as f64);
            (px - qx).powi(2) + (py - qy).powi(2) < min_d2
        });
        if !suppressed {
            kept.push(p);
        }
    }
    DetectionList {
        centers: kept.iter().map(|&p| ((p % width) as f64, (p / width) as f64)).collect(),
        scores: kept.iter().map(|&p| smooth[p]).collect(),
    }
}
