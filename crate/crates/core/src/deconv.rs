//! Stain separation in optical-density space.
//!
//! A pixel's OD is modelled as `od = Σ_k c_k · m_k` where `m_k` are unit
//! stain vectors. Encoding recovers the hematoxylin and DAB concentrations,
//! normalizes them by `c_ref` and clamps to `[0, 1]`; reconstruction runs
//! the model forward.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::colorspace::OdImage;
use crate::error::{Error, Result};
use crate::nnls::{dot, Nnls};

pub const HEX: &str = "HEX";
pub const DAB: &str = "DAB";
pub const EOSIN: &str = "EOS";
pub const RESIDUAL: &str = "RES";

/// Default concentration scale: a normalized value of 1.0 is 2.0 units.
pub const DEFAULT_C_REF: f64 = 2.0;

/// Minimum pairwise angle between stain vectors.
pub const MIN_STAIN_ANGLE_DEG: f64 = 1.0;

/// Condition number above which a 3×3 stain matrix counts as singular.
pub const MAX_CONDITION: f64 = 1e8;

/// Tolerance on the unit-norm invariant of stain vectors.
pub const UNIT_NORM_TOL: f64 = 1e-9;

/// Reference hematoxylin / eosin / DAB absorbance directions of the classic
/// `rgb2hed` transform, before normalization.
const HED_REFERENCE: [[f64; 3]; 3] = [[0.65, 0.70, 0.29], [0.07, 0.99, 0.11], [0.27, 0.57, 0.78]];

/// 2 or 3 unit-norm, nonnegative stain OD vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StainMatrixFile", into = "StainMatrixFile")]
pub struct StainMatrix {
    labels: Vec<String>,
    vectors: Vec<[f64; 3]>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StainMatrixFile {
    labels: Vec<String>,
    vectors: Vec<[f64; 3]>,
}

impl TryFrom<StainMatrixFile> for StainMatrix {
    type Error = Error;

    fn try_from(file: StainMatrixFile) -> Result<Self> {
        StainMatrix::new(file.labels, file.vectors)
    }
}

impl From<StainMatrix> for StainMatrixFile {
    fn from(m: StainMatrix) -> Self {
        StainMatrixFile { labels: m.labels, vectors: m.vectors }
    }
}

impl StainMatrix {
    /// Validates and unit-normalizes the given vectors. Labels must include
    /// `HEX` and `DAB`; a third vector must be labelled `EOS` or `RES`.
    pub fn new(labels: Vec<String>, vectors: Vec<[f64; 3]>) -> Result<Self> {
        if !(2..=3).contains(&vectors.len()) {
            return Err(Error::InvalidStainMatrix(format!("expected 2 or 3 stain vectors, got {}", vectors.len())));
        }
        if labels.len() != vectors.len() {
            return Err(Error::InvalidStainMatrix(format!("{} labels for {} vectors", labels.len(), vectors.len())));
        }
        for required in [HEX, DAB] {
            if labels.iter().filter(|l| *l == required).count() != 1 {
                return Err(Error::InvalidStainMatrix(format!("labels must contain '{required}' exactly once")));
            }
        }
        if let Some(other) = labels.iter().find(|l| ![HEX, DAB, EOSIN, RESIDUAL].contains(&l.as_str())) {
            return Err(Error::InvalidStainMatrix(format!("unknown stain label '{other}'")));
        }

        let mut unit = Vec::with_capacity(vectors.len());
        for (label, v) in labels.iter().zip(&vectors) {
            if v.iter().any(|c| !c.is_finite() || *c < 0.0) {
                return Err(Error::InvalidStainMatrix(format!(
                    "stain '{label}' must have finite nonnegative components, got {v:?}"
                )));
            }
            let norm = dot(v, v).sqrt();
            if norm <= 1e-12 {
                return Err(Error::InvalidStainMatrix(format!("stain '{label}' is zero")));
            }
            if (norm - 1.0).abs() <= UNIT_NORM_TOL {
                unit.push(*v);
            } else {
                unit.push(v.map(|c| c / norm));
            }
        }
        for i in 0..unit.len() {
            for j in (i + 1)..unit.len() {
                let angle = angle_deg(&unit[i], &unit[j]);
                if angle < MIN_STAIN_ANGLE_DEG {
                    return Err(Error::InvalidStainMatrix(format!(
                        "stains '{}' and '{}' are {angle:.3}° apart",
                        labels[i], labels[j]
                    )));
                }
            }
        }
        Ok(Self { labels, vectors: unit })
    }

    /// Two-stain matrix `[HEX, DAB]`.
    pub fn hd(hematoxylin: [f64; 3], dab: [f64; 3]) -> Result<Self> {
        Self::new(vec![HEX.into(), DAB.into()], vec![hematoxylin, dab])
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn vectors(&self) -> &[[f64; 3]] {
        &self.vectors
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    fn index_of(&self, label: &str) -> usize {
        self.labels.iter().position(|l| l == label).expect("HEX and DAB presence is checked on construction")
    }

    pub fn hematoxylin(&self) -> [f64; 3] {
        self.vectors[self.index_of(HEX)]
    }

    pub fn dab(&self) -> [f64; 3] {
        self.vectors[self.index_of(DAB)]
    }

    /// The `[HEX, DAB]` sub-matrix.
    pub fn hd_only(&self) -> StainMatrix {
        StainMatrix { labels: vec![HEX.into(), DAB.into()], vectors: vec![self.hematoxylin(), self.dab()] }
    }

    /// Largest per-stain angle to `other`, matching stains by label.
    pub fn max_angle_deg(&self, other: &StainMatrix) -> f64 {
        [HEX, DAB]
            .iter()
            .map(|l| angle_deg(&self.vectors[self.index_of(l)], &other.vectors[other.index_of(l)]))
            .fold(0.0, f64::max)
    }

    /// Condition number of the 3×3 matrix with the stain vectors as columns.
    pub fn condition_number(&self) -> f64 {
        if self.len() != 3 {
            return f64::INFINITY;
        }
        let m = self.column_matrix();
        let sv = m.singular_values();
        let max = sv.max();
        let min = sv.min();
        if min <= 0.0 {
            f64::INFINITY
        } else {
            max / min
        }
    }

    fn column_matrix(&self) -> Matrix3<f64> {
        Matrix3::from_columns(&[
            Vector3::from(self.vectors[0]),
            Vector3::from(self.vectors[1]),
            Vector3::from(self.vectors[2]),
        ])
    }
}

/// Angle between two vectors in degrees.
pub fn angle_deg(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let cos = dot(a, b) / (dot(a, a).sqrt() * dot(b, b).sqrt());
    cos.clamp(-1.0, 1.0).acos().to_degrees()
}

/// The fixed hematoxylin / eosin / DAB reference matrix, rows unit-normalized.
pub fn fixed_hd_matrix() -> StainMatrix {
    StainMatrix::new(vec![HEX.into(), EOSIN.into(), DAB.into()], HED_REFERENCE.to_vec())
        .expect("reference stain matrix is valid")
}

/// Hematoxylin and DAB concentration planes normalized to `[0, 1]` by `c_ref`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationImage {
    width: usize,
    height: usize,
    h_plane: Vec<f64>,
    d_plane: Vec<f64>,
    c_ref: f64,
    microns_per_pixel: f64,
}

impl ConcentrationImage {
    pub fn new(
        width: usize,
        height: usize,
        h_plane: Vec<f64>,
        d_plane: Vec<f64>,
        c_ref: f64,
        microns_per_pixel: f64,
    ) -> Result<Self> {
        let n = width * height;
        if h_plane.len() != n || d_plane.len() != n {
            return Err(Error::InvalidImage(format!("concentration planes must hold {n} values")));
        }
        if !(c_ref.is_finite() && c_ref > 0.0) {
            return Err(Error::InvalidConfig(format!("c_ref must be positive, got {c_ref}")));
        }
        if !(microns_per_pixel.is_finite() && microns_per_pixel > 0.0) {
            return Err(Error::InvalidImage(format!("microns_per_pixel must be positive, got {microns_per_pixel}")));
        }
        if let Some(v) = h_plane.iter().chain(&d_plane).find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidImage(format!("concentration {v} outside [0, 1]")));
        }
        Ok(Self { width, height, h_plane, d_plane, c_ref, microns_per_pixel })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn h_plane(&self) -> &[f64] {
        &self.h_plane
    }

    pub fn d_plane(&self) -> &[f64] {
        &self.d_plane
    }

    pub fn c_ref(&self) -> f64 {
        self.c_ref
    }

    pub fn microns_per_pixel(&self) -> f64 {
        self.microns_per_pixel
    }

    /// Same geometry and scale with new planes. Values are trusted to lie in
    /// `[0, 1]`.
    pub(crate) fn with_planes(&self, h_plane: Vec<f64>, d_plane: Vec<f64>) -> Self {
        debug_assert_eq!(h_plane.len(), self.len());
        debug_assert_eq!(d_plane.len(), self.len());
        Self { h_plane, d_plane, ..*self }
    }
}

fn normalize(c: f64, c_ref: f64) -> f64 {
    (c.max(0.0) / c_ref).min(1.0)
}

fn check_c_ref(c_ref: f64) -> Result<()> {
    if c_ref.is_finite() && c_ref > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("c_ref must be positive, got {c_ref}")))
    }
}

/// Exact 3×3 unmixing. The third (eosin / residual) concentration is dropped.
pub fn deconvolve_inverse(
    od: &OdImage,
    stains: &StainMatrix,
    c_ref: f64,
    microns_per_pixel: f64,
) -> Result<ConcentrationImage> {
    if stains.len() != 3 {
        return Err(Error::InvalidStainMatrix(format!("matrix inversion needs 3 stain vectors, got {}", stains.len())));
    }
    check_c_ref(c_ref)?;
    let condition = stains.condition_number();
    if condition.is_nan() || condition > MAX_CONDITION {
        return Err(Error::SingularMatrix { condition });
    }
    let inverse = stains.column_matrix().try_inverse().ok_or(Error::SingularMatrix { condition })?;
    let h_row = inverse.row(stains.index_of(HEX)).transpose();
    let d_row = inverse.row(stains.index_of(DAB)).transpose();
    let h_row = [h_row[0], h_row[1], h_row[2]];
    let d_row = [d_row[0], d_row[1], d_row[2]];

    let n = od.len();
    let mut h_plane = Vec::with_capacity(n);
    let mut d_plane = Vec::with_capacity(n);
    for p in od.pixels() {
        h_plane.push(normalize(dot(&h_row, &p), c_ref));
        d_plane.push(normalize(dot(&d_row, &p), c_ref));
    }
    ConcentrationImage::new(od.width(), od.height(), h_plane, d_plane, c_ref, microns_per_pixel)
}

/// Per-pixel two-stain NNLS unmixing against the `[HEX, DAB]` vectors.
pub fn deconvolve_nnls(
    od: &OdImage,
    stains: &StainMatrix,
    c_ref: f64,
    microns_per_pixel: f64,
) -> Result<ConcentrationImage> {
    if stains.len() != 2 {
        return Err(Error::InvalidStainMatrix(format!("NNLS unmixing takes 2 stain vectors, got {}", stains.len())));
    }
    check_c_ref(c_ref)?;
    let solver = Nnls::new(&[stains.hematoxylin(), stains.dab()]);
    let (h_plane, d_plane): (Vec<f64>, Vec<f64>) = (0..od.len())
        .into_par_iter()
        .map(|i| {
            let c = solver.solve(&od.pixel(i));
            (normalize(c[0], c_ref), normalize(c[1], c_ref))
        })
        .unzip();
    ConcentrationImage::new(od.width(), od.height(), h_plane, d_plane, c_ref, microns_per_pixel)
}

/// Forward model `od = (h·c_ref)·m_H + (d·c_ref)·m_D`, clamped to `[0, od_max]`.
#[allow(clippy::needless_range_loop)]
pub fn reconstruct(conc: &ConcentrationImage, stains: &StainMatrix) -> OdImage {
    let m_h = stains.hematoxylin();
    let m_d = stains.dab();
    let n = conc.len();
    let mut planes = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    for i in 0..n {
        let h = conc.h_plane[i] * conc.c_ref;
        let d = conc.d_plane[i] * conc.c_ref;
        for c in 0..3 {
            planes[c][i] = h * m_h[c] + d * m_d[c];
        }
    }
    OdImage::from_planes(conc.width, conc.height, planes).expect("plane sizes match")
}
