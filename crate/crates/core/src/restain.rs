//! Clamped linear remixing of hematoxylin and DAB planes.
//!
//! ```text
//! h' = clamp(hh·h + dh·d, 0, 1)
//! d' = clamp(hd·h + dd·d, 0, 1)
//! ```

use serde::{Deserialize, Serialize};

use crate::deconv::ConcentrationImage;
use crate::error::{Error, Result};

/// Mixing coefficients. `hh`/`dh` feed the hematoxylin plane from H and D,
/// `hd`/`dd` feed the DAB plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlphaParams {
    #[serde(rename = "hh")]
    pub alpha_hh: f64,
    #[serde(rename = "hd")]
    pub alpha_hd: f64,
    #[serde(rename = "dh")]
    pub alpha_dh: f64,
    #[serde(rename = "dd")]
    pub alpha_dd: f64,
}

impl AlphaParams {
    pub const IDENTITY: AlphaParams = AlphaParams { alpha_hh: 1.0, alpha_hd: 0.0, alpha_dh: 0.0, alpha_dd: 1.0 };

    pub const ZERO: AlphaParams = AlphaParams { alpha_hh: 0.0, alpha_hd: 0.0, alpha_dh: 0.0, alpha_dd: 0.0 };

    pub fn new(alpha_hh: f64, alpha_hd: f64, alpha_dh: f64, alpha_dd: f64) -> Result<Self> {
        let a = Self { alpha_hh, alpha_hd, alpha_dh, alpha_dd };
        a.validate()?;
        Ok(a)
    }

    /// Nuclear-marker mixing: membrane stain folded into hematoxylin, DAB removed.
    pub fn nuclear(alpha_hh: f64, alpha_dh: f64) -> Self {
        Self { alpha_hh, alpha_hd: 0.0, alpha_dh, alpha_dd: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.alpha_hh, self.alpha_hd, self.alpha_dh, self.alpha_dd];
        if all.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("alpha coefficients must be finite: {self:?}")))
        }
    }

    /// Remixes one `(h, d)` pair.
    #[inline]
    #[allow(clippy::manual_clamp)] // max/min sends NaN to 0; clamp would pass it through
    pub fn mix(&self, h: f64, d: f64) -> (f64, f64) {
        let h_out = (self.alpha_hh * h + self.alpha_dh * d).max(0.0).min(1.0);
        let d_out = (self.alpha_hd * h + self.alpha_dd * d).max(0.0).min(1.0);
        (h_out, d_out)
    }
}

pub fn apply_kappa(conc: &ConcentrationImage, alpha: &AlphaParams) -> ConcentrationImage {
    let (h, d): (Vec<f64>, Vec<f64>) =
        conc.h_plane().iter().zip(conc.d_plane()).map(|(&h, &d)| alpha.mix(h, d)).unzip();
    conc.with_planes(h, d)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub name: String,
    pub alpha: AlphaParams,
}

pub const PRESET_DH: [f64; 3] = [0.0, 0.25, 1.0];
pub const PRESET_HH: [f64; 2] = [0.25, 1.0];

pub fn preset_name(alpha_hh: f64, alpha_dh: f64) -> String {
    format!("hh{alpha_hh:.2}_dh{alpha_dh:.2}")
}

/// The six nuclear-marker presets: `dh ∈ {0, 0.25, 1}` × `hh ∈ {0.25, 1}`,
/// `hd = dd = 0`.
pub fn nuclear_presets() -> Vec<Preset> {
    PRESET_DH
        .iter()
        .flat_map(|&dh| {
            PRESET_HH.iter().map(move |&hh| Preset { name: preset_name(hh, dh), alpha: AlphaParams::nuclear(hh, dh) })
        })
        .collect()
}

pub fn find_preset(name: &str) -> Option<Preset> {
    nuclear_presets().into_iter().find(|p| p.name == name)
}
