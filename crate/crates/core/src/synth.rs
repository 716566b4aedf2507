//! Deterministic synthetic membrane-marker FOVs with known nucleus centers.
//!
//! Nuclei are hematoxylin disks surrounded by a DAB membrane ring, mixed in
//! OD space through the fixed HD basis. Every nucleus draws from its own
//! ChaCha stream (stream `index + 1` of the seed), pixel noise from stream 0,
//! so the output is a pure function of the config.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::colorspace::{od_to_rgb, OdImage, RgbImage, DEFAULT_MICRONS_PER_PIXEL};
use crate::deconv::fixed_hd_matrix;
use crate::error::{Error, Result};

/// Minimum center distance as a multiple of the summed cell radii
/// (nucleus plus membrane), so neighboring cells never touch.
pub const OVERLAP_MARGIN: f64 = 1.2;

pub const MAX_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub width: usize,
    pub height: usize,
    pub microns_per_pixel: f64,
    pub n_nuclei: usize,
    pub nucleus_radius_um: (f64, f64),
    pub membrane_thickness_um: f64,
    /// Absolute hematoxylin concentration per nucleus.
    pub h_concentration: (f64, f64),
    /// Absolute DAB concentration per membrane ring.
    pub d_concentration: (f64, f64),
    /// Uniform OD haze added to every channel.
    pub background_od: f64,
    /// Per-pixel, per-channel Gaussian noise in OD units.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            width: 256,
            height: 256,
            microns_per_pixel: DEFAULT_MICRONS_PER_PIXEL,
            n_nuclei: 20,
            nucleus_radius_um: (1.0, 1.25),
            membrane_thickness_um: 1.25,
            h_concentration: (0.2, 0.5),
            d_concentration: (0.3, 0.6),
            background_od: 0.02,
            noise_sigma: 0.01,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.width == 0 || self.height == 0 {
            return bad(format!("image size must be nonzero, got {}x{}", self.width, self.height));
        }
        if !(self.microns_per_pixel.is_finite() && self.microns_per_pixel > 0.0) {
            return bad(format!("microns_per_pixel must be positive, got {}", self.microns_per_pixel));
        }
        let ranges = [
            ("nucleus_radius_um", self.nucleus_radius_um),
            ("h_concentration", self.h_concentration),
            ("d_concentration", self.d_concentration),
        ];
        for (name, (lo, hi)) in ranges {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi && lo >= 0.0) {
                return bad(format!("{name} must be a nonnegative range with min <= max, got ({lo}, {hi})"));
            }
        }
        if self.nucleus_radius_um.0 <= 0.0 {
            return bad("nucleus radii must be positive".into());
        }
        for (name, v) in [
            ("membrane_thickness_um", self.membrane_thickness_um),
            ("background_od", self.background_od),
            ("noise_sigma", self.noise_sigma),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        Ok(())
    }

    /// Same config with the seed replaced by the `index`-th derived seed.
    pub fn for_fov(&self, index: u64) -> Self {
        Self { seed: derive_seed(self.seed, index), ..self.clone() }
    }
}

/// SplitMix64 finalizer over `seed` and `index`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundTruth {
    /// Pixel coordinates; pixel `(x, y)` has its center at `(x, y)`.
    pub centers: Vec<(f64, f64)>,
    pub radii_px: Vec<f64>,
}

impl GroundTruth {
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }
}

/// Concentration fields before OD mixing, in absolute units.
#[derive(Debug, Clone)]
pub struct StainFields {
    pub hematoxylin: Vec<f64>,
    pub dab: Vec<f64>,
}

#[allow(clippy::needless_range_loop)]
pub fn synthesize_fov(cfg: &SynthConfig) -> Result<(RgbImage, GroundTruth)> {
    let (fields, truth) = synthesize_fields(cfg)?;
    let stains = fixed_hd_matrix();
    let (m_h, m_d) = (stains.hematoxylin(), stains.dab());

    let mut noise_rng = stream(cfg.seed, 0);
    let noise = Normal::new(0.0, cfg.noise_sigma.max(0.0)).expect("sigma is finite and >= 0");
    let n = cfg.width * cfg.height;
    let mut planes = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    for i in 0..n {
        let (h, d) = (fields.hematoxylin[i], fields.dab[i]);
        for c in 0..3 {
            let mut od = h * m_h[c] + d * m_d[c] + cfg.background_od;
            if cfg.noise_sigma > 0.0 {
                od += noise.sample(&mut noise_rng);
            }
            planes[c][i] = od;
        }
    }
    let od = OdImage::from_planes(cfg.width, cfg.height, planes)?;
    Ok((od_to_rgb(&od, cfg.microns_per_pixel)?, truth))
}

/// Places nuclei and rasterizes the hematoxylin and DAB fields.
pub fn synthesize_fields(cfg: &SynthConfig) -> Result<(StainFields, GroundTruth)> {
    cfg.validate()?;
    let to_px = 1.0 / cfg.microns_per_pixel;
    let ring_px = cfg.membrane_thickness_um * to_px;

    struct Nucleus {
        x: f64,
        y: f64,
        r: f64,
        h: f64,
        d: f64,
    }
    let mut placed: Vec<Nucleus> = Vec::new();
    for index in 0..cfg.n_nuclei {
        let mut rng = stream(cfg.seed, index as u64 + 1);
        for _ in 0..MAX_ATTEMPTS {
            let r = uniform(&mut rng, cfg.nucleus_radius_um) * to_px;
            let h = uniform(&mut rng, cfg.h_concentration);
            let d = uniform(&mut rng, cfg.d_concentration);
            // keep the whole ring (plus the 1 px ramp) inside the image
            let pad = r + ring_px + 1.0;
            let (x_hi, y_hi) = (cfg.width as f64 - 1.0 - pad, cfg.height as f64 - 1.0 - pad);
            let u: f64 = rng.random();
            let v: f64 = rng.random();
            if x_hi < pad || y_hi < pad {
                continue;
            }
            let x = pad + u * (x_hi - pad);
            let y = pad + v * (y_hi - pad);
            let clear = placed
                .iter()
                .all(|o| ((o.x - x).powi(2) + (o.y - y).powi(2)).sqrt() >= OVERLAP_MARGIN * (o.r + r + 2.0 * ring_px));
            if clear {
                placed.push(Nucleus { x, y, r, h, d });
                break;
            }
        }
    }

    let (w, hgt) = (cfg.width, cfg.height);
    let mut hematoxylin = vec![0.0; w * hgt];
    let mut dab = vec![0.0; w * hgt];
    for nuc in &placed {
        let reach = nuc.r + ring_px + 1.0;
        let x0 = (nuc.x - reach).floor().max(0.0) as usize;
        let x1 = ((nuc.x + reach).ceil() as usize).min(w - 1);
        let y0 = (nuc.y - reach).floor().max(0.0) as usize;
        let y1 = ((nuc.y + reach).ceil() as usize).min(hgt - 1);
        for py in y0..=y1 {
            for px in x0..=x1 {
                let dist = ((px as f64 - nuc.x).powi(2) + (py as f64 - nuc.y).powi(2)).sqrt();
                let i = py * w + px;
                hematoxylin[i] += nuc.h * disk_weight(dist, nuc.r);
                dab[i] += nuc.d * ring_weight(dist, nuc.r, ring_px);
            }
        }
    }

    let truth = GroundTruth {
        centers: placed.iter().map(|n| (n.x, n.y)).collect(),
        radii_px: placed.iter().map(|n| n.r).collect(),
    };
    Ok((StainFields { hematoxylin, dab }, truth))
}

/// Disk coverage with a 1 px linear edge ramp centered on the radius.
pub fn disk_weight(dist: f64, radius: f64) -> f64 {
    (radius + 0.5 - dist).clamp(0.0, 1.0)
}

/// Annulus `[radius, radius + thickness]` coverage with 1 px ramps.
pub fn ring_weight(dist: f64, radius: f64, thickness: f64) -> f64 {
    if thickness <= 0.0 {
        return 0.0;
    }
    (dist - radius + 0.5).min(radius + thickness + 0.5 - dist).clamp(0.0, 1.0)
}

fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    let u: f64 = rng.random();
    lo + u * (hi - lo)
}

pub fn format_ground_truth_csv(truth: &GroundTruth) -> String {
    let records: Vec<crate::io::CenterRecord> =
        truth.centers.iter().map(|&(x, y)| crate::io::CenterRecord { x, y, score: None }).collect();
    crate::io::format_centers_csv(&records, false)
}
