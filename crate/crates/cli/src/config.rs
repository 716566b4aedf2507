//! Strict JSON run configuration and the flag > config > default
//! resolution shared by the subcommands.

use std::path::Path;

use restainlab::colorspace::DEFAULT_MICRONS_PER_PIXEL;
use restainlab::deconv::DEFAULT_C_REF;
use restainlab::restain::find_preset;
use restainlab::{
    nuclear_presets, AlphaParams, ClassicalCodec, CodecKind, CodecSpec, DetectorConfig, Preset, StainMatrix,
    SynthConfig,
};
use serde::Deserialize;

use crate::outcome::{Classify, Failure};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub synth: Option<SynthConfig>,
    pub codec: Option<CodecSection>,
    pub detector: Option<DetectorConfig>,
    pub alpha: Option<AlphaParams>,
    pub presets: Option<Vec<String>>,
    pub seed: Option<u64>,
    pub microns_per_pixel: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodecSection {
    pub kind: Option<CodecKind>,
    pub stains: Option<StainMatrix>,
    pub c_ref: Option<f64>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, Failure> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).usage(format!("cannot read config {}", path.display()))?;
        let cfg: RunConfig = serde_json::from_str(&text).usage(format!("invalid config {}", path.display()))?;
        if let Some(mpp) = cfg.microns_per_pixel {
            check_mpp(mpp)?;
        }
        Ok(cfg)
    }

    /// `flag`, else the config value, else 0.5 µm/px.
    pub fn microns_per_pixel(&self, flag: Option<f64>) -> Result<f64, Failure> {
        let mpp = flag.or(self.microns_per_pixel).unwrap_or(DEFAULT_MICRONS_PER_PIXEL);
        check_mpp(mpp)?;
        Ok(mpp)
    }

    pub fn detector(&self) -> DetectorConfig {
        self.detector.unwrap_or_default()
    }
}

fn check_mpp(mpp: f64) -> Result<(), Failure> {
    if mpp.is_finite() && mpp > 0.0 {
        Ok(())
    } else {
        Err(Failure::usage(format!("microns per pixel must be positive, got {mpp}")))
    }
}

pub fn read_stains(path: &Path) -> Result<StainMatrix, Failure> {
    let text = std::fs::read_to_string(path).usage(format!("cannot read stain matrix {}", path.display()))?;
    serde_json::from_str(&text).usage(format!("invalid stain matrix {}", path.display()))
}

/// Codec flags shared by every image-reading command.
#[derive(Debug, Clone, Default)]
pub struct CodecFlags<'a> {
    pub kind: Option<CodecKind>,
    pub stains: Option<&'a Path>,
    pub c_ref: Option<f64>,
}

pub fn build_codec(flags: &CodecFlags<'_>, cfg: &RunConfig) -> Result<ClassicalCodec, Failure> {
    let section = cfg.codec.clone().unwrap_or_default();
    let kind = flags.kind.or(section.kind).unwrap_or(CodecKind::FixedInverse);
    let c_ref = flags.c_ref.or(section.c_ref).unwrap_or(DEFAULT_C_REF);
    let stains = match flags.stains {
        Some(path) => Some(read_stains(path)?),
        None => section.stains,
    };
    let spec = match stains {
        Some(stains) => CodecSpec::new(kind, stains, c_ref),
        None if kind == CodecKind::KsvdNnls => {
            return Err(Failure::usage("the ksvd-nnls codec needs an estimated matrix (--stains FILE)"))
        }
        None => CodecSpec::new(kind, CodecSpec::fixed(kind).stains, c_ref),
    };
    ClassicalCodec::new(spec.usage("invalid codec")?).usage("invalid codec")
}

pub fn lookup_preset(name: &str) -> Result<Preset, Failure> {
    find_preset(name).ok_or_else(|| {
        let valid: Vec<String> = nuclear_presets().into_iter().map(|p| p.name).collect();
        Failure::usage(format!("unknown preset '{name}'; valid presets: {}", valid.join(", ")))
    })
}

/// `all` or a comma-separated list of preset names.
pub fn parse_preset_list(spec: &str) -> Result<Vec<Preset>, Failure> {
    if spec.trim() == "all" {
        return Ok(nuclear_presets());
    }
    let names: Vec<&str> = spec.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    let mut presets = Vec::with_capacity(names.len());
    for name in names {
        let preset = lookup_preset(name)?;
        if presets.iter().any(|p: &Preset| p.name == preset.name) {
            return Err(Failure::usage(format!("preset '{name}' listed twice")));
        }
        presets.push(preset);
    }
    Ok(presets)
}

pub fn parse_alpha(json: &str) -> Result<AlphaParams, Failure> {
    let alpha: AlphaParams =
        serde_json::from_str(json).usage("invalid --alpha (expected {\"hh\",\"hd\",\"dh\",\"dd\"})")?;
    alpha.validate().usage("invalid --alpha")?;
    Ok(alpha)
}

/// Synth settings with top-level `seed` / `microns_per_pixel` and flags
/// layered on top.
pub fn synth_config(cfg: &RunConfig, seed: Option<u64>, mpp: Option<f64>) -> Result<SynthConfig, Failure> {
    let mut synth = cfg.synth.clone().unwrap_or_default();
    if let Some(s) = seed.or(cfg.seed) {
        synth.seed = s;
    }
    if let Some(m) = mpp.or(cfg.microns_per_pixel) {
        synth.microns_per_pixel = m;
    }
    synth.validate().usage("invalid synth config")?;
    Ok(synth)
}
