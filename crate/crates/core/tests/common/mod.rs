//! Independent data generators shared by the integration and acceptance
//! tests. Nothing here calls into the code under test except for plain
//! container types and the fixed stain basis.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use restainlab::{fixed_hd_matrix, RgbImage, StainMatrix};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

pub fn unit(a: [f64; 3]) -> [f64; 3] {
    let n = dot(&a, &a).sqrt();
    a.map(|v| v / n)
}

pub fn angle_deg(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let c = dot(a, b) / (dot(a, a).sqrt() * dot(b, b).sqrt());
    c.clamp(-1.0, 1.0).acos().to_degrees()
}

/// Rodrigues rotation of `v` about the unit vector `axis`.
pub fn rotate(v: &[f64; 3], axis: &[f64; 3], degrees: f64) -> [f64; 3] {
    let (s, c) = degrees.to_radians().sin_cos();
    let kxv = cross(axis, v);
    let kdv = dot(axis, v);
    std::array::from_fn(|i| v[i] * c + kxv[i] * s + axis[i] * kdv * (1.0 - c))
}

/// Forward Beer–Lambert with round-half-away-from-zero quantization.
pub fn od_to_byte(od: f64) -> u8 {
    (255.0 * 10f64.powf(-od)).round().clamp(0.0, 255.0) as u8
}

pub fn byte_to_od(v: u8) -> f64 {
    -(f64::from(v.max(1)) / 255.0).log10()
}

/// Image made only of the two fixed stain vectors, absolute concentrations
/// in `[0, c_max]`. A fifth of the pixels are pure H, a fifth pure DAB, a
/// tenth blank; the rest mixed.
pub fn two_stain_image(seed: u64, width: usize, height: usize, c_max: f64) -> RgbImage {
    let m = fixed_hd_matrix();
    let (mh, md) = (m.hematoxylin(), m.dab());
    let mut r = rng(seed);
    let mut bytes = Vec::with_capacity(width * height * 3);
    for _ in 0..width * height {
        let kind: f64 = r.random();
        let h: f64 = r.random::<f64>() * c_max;
        let d: f64 = r.random::<f64>() * c_max;
        let (h, d) = match kind {
            k if k < 0.2 => (h, 0.0),
            k if k < 0.4 => (0.0, d),
            k if k < 0.5 => (0.0, 0.0),
            _ => (h, d),
        };
        for c in 0..3 {
            bytes.push(od_to_byte(h * mh[c] + d * md[c]));
        }
    }
    RgbImage::new(width, height, bytes, 0.5).expect("valid image")
}

pub struct KsvdTrial {
    pub data: Vec<[f64; 3]>,
    pub truth: StainMatrix,
    pub init: StainMatrix,
}

/// Two-stain OD pixels (one third pure H, pure DAB and mixed, concentrations
/// `U(c_lo, c_hi)`, Gaussian OD noise), and an initial basis equal to the
/// truth rigidly rotated by `degrees` about a random axis in the H–D plane.
pub fn ksvd_trial(seed: u64, pixels: usize, noise: f64, degrees: f64, (c_lo, c_hi): (f64, f64)) -> KsvdTrial {
    let truth = fixed_hd_matrix().hd_only();
    let (h, d) = (truth.hematoxylin(), truth.dab());
    let mut r = rng(seed);
    let gauss = Normal::new(0.0, noise).expect("finite sigma");
    let mut data = Vec::with_capacity(pixels);
    for i in 0..pixels {
        let a = c_lo + r.random::<f64>() * (c_hi - c_lo);
        let b = c_lo + r.random::<f64>() * (c_hi - c_lo);
        let (a, b) = match i % 3 {
            0 => (a, 0.0),
            1 => (0.0, b),
            _ => (a, b),
        };
        let mut px: [f64; 3] = std::array::from_fn(|c| a * h[c] + b * d[c]);
        if noise > 0.0 {
            for v in &mut px {
                *v += gauss.sample(&mut r);
            }
        }
        data.push(px);
    }

    let normal = unit(cross(&h, &d));
    let in_plane = unit(cross(&normal, &h));
    let phi = r.random::<f64>() * std::f64::consts::TAU;
    let axis: [f64; 3] = std::array::from_fn(|i| phi.cos() * h[i] + phi.sin() * in_plane[i]);
    let init =
        StainMatrix::hd(rotate(&h, &axis, degrees), rotate(&d, &axis, degrees)).expect("rotated basis stays valid");
    KsvdTrial { data, truth, init }
}

/// Best (count, total distance in µm) over every injective gated
/// assignment of pixel-coordinate points:
/// more matches first, then smaller total distance.
pub fn brute_force_matching(gt: &[(f64, f64)], pred: &[(f64, f64)], gate: f64, mpp: f64) -> (usize, f64) {
    #[allow(clippy::too_many_arguments)]
    fn go(
        i: usize,
        gt: &[(f64, f64)],
        pred: &[(f64, f64)],
        used: &mut Vec<bool>,
        gate: f64,
        mpp: f64,
        acc: (usize, f64),
        best: &mut (usize, f64),
    ) {
        if i == gt.len() {
            if acc.0 > best.0 || (acc.0 == best.0 && acc.1 < best.1) {
                *best = acc;
            }
            return;
        }
        go(i + 1, gt, pred, used, gate, mpp, acc, best);
        for j in 0..pred.len() {
            if used[j] {
                continue;
            }
            let d = ((gt[i].0 - pred[j].0).powi(2) + (gt[i].1 - pred[j].1).powi(2)).sqrt() * mpp;
            if d <= gate {
                used[j] = true;
                go(i + 1, gt, pred, used, gate, mpp, (acc.0 + 1, acc.1 + d), best);
                used[j] = false;
            }
        }
    }
    let mut best = (0, 0.0);
    go(0, gt, pred, &mut vec![false; pred.len()], gate, mpp, (0, 0.0), &mut best);
    best
}
