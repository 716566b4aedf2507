//! Codec-composed restaining (`decode ∘ κ ∘ encode`) and batch dataset
//! generation.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::colorspace::{od_to_rgb, rgb_to_od, RgbImage};
use crate::deconv::{
    deconvolve_inverse, deconvolve_nnls, fixed_hd_matrix, reconstruct, ConcentrationImage, StainMatrix, DEFAULT_C_REF,
};
use crate::error::{Error, Result};
use crate::io::{read_png, write_png};
use crate::restain::{apply_kappa, AlphaParams, Preset};

/// Maps RGB images to normalized H/D concentrations and back.
pub trait HdCodec: Send + Sync {
    fn encode(&self, img: &RgbImage) -> Result<ConcentrationImage>;
    fn decode(&self, conc: &ConcentrationImage) -> Result<RgbImage>;
    /// Serializable description recorded in manifests.
    fn spec(&self) -> CodecSpec;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CodecKind {
    /// 3×3 matrix inversion against a hematoxylin / eosin / DAB basis.
    FixedInverse,
    /// Two-stain NNLS against the fixed HD basis.
    FixedNnls,
    /// Two-stain NNLS against an estimated basis.
    KsvdNnls,
}

impl CodecKind {
    pub const ALL: [CodecKind; 3] = [CodecKind::FixedInverse, CodecKind::FixedNnls, CodecKind::KsvdNnls];

    pub fn as_str(self) -> &'static str {
        match self {
            CodecKind::FixedInverse => "fixed-inverse",
            CodecKind::FixedNnls => "fixed-nnls",
            CodecKind::KsvdNnls => "ksvd-nnls",
        }
    }
}

impl std::str::FromStr for CodecKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CodecKind::ALL.into_iter().find(|k| k.as_str() == s).ok_or_else(|| {
            Error::InvalidConfig(format!("unknown codec '{s}', expected one of fixed-inverse, fixed-nnls, ksvd-nnls"))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodecSpec {
    pub kind: CodecKind,
    pub stains: StainMatrix,
    pub c_ref: f64,
}

impl CodecSpec {
    /// Fixed reference basis for the fixed kinds. `ksvd-nnls` needs an
    /// estimated basis, see [`CodecSpec::new`].
    pub fn fixed(kind: CodecKind) -> Self {
        let stains = match kind {
            CodecKind::FixedInverse => fixed_hd_matrix(),
            CodecKind::FixedNnls | CodecKind::KsvdNnls => fixed_hd_matrix().hd_only(),
        };
        Self { kind, stains, c_ref: DEFAULT_C_REF }
    }

    /// NNLS kinds keep only the HEX and DAB rows of a 3-stain matrix.
    pub fn new(kind: CodecKind, stains: StainMatrix, c_ref: f64) -> Result<Self> {
        let stains = match kind {
            CodecKind::FixedInverse if stains.len() != 3 => {
                return Err(Error::InvalidConfig("fixed-inverse codec needs a 3-stain matrix".into()))
            }
            CodecKind::FixedInverse => stains,
            CodecKind::FixedNnls | CodecKind::KsvdNnls => stains.hd_only(),
        };
        let spec = Self { kind, stains, c_ref };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c_ref.is_finite() && self.c_ref > 0.0) {
            return Err(Error::InvalidConfig(format!("c_ref must be positive, got {}", self.c_ref)));
        }
        let expected = if self.kind == CodecKind::FixedInverse { 3 } else { 2 };
        if self.stains.len() != expected {
            return Err(Error::InvalidConfig(format!(
                "{} codec needs {expected} stain vectors, got {}",
                self.kind.as_str(),
                self.stains.len()
            )));
        }
        Ok(())
    }
}

/// Beer–Lambert codec over a fixed or estimated stain basis.
#[derive(Debug, Clone)]
pub struct ClassicalCodec {
    spec: CodecSpec,
}

impl ClassicalCodec {
    pub fn new(spec: CodecSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self { spec })
    }

    pub fn fixed(kind: CodecKind) -> Self {
        Self { spec: CodecSpec::fixed(kind) }
    }
}

impl HdCodec for ClassicalCodec {
    fn encode(&self, img: &RgbImage) -> Result<ConcentrationImage> {
        let od = rgb_to_od(img);
        let mpp = img.microns_per_pixel();
        match self.spec.kind {
            CodecKind::FixedInverse => deconvolve_inverse(&od, &self.spec.stains, self.spec.c_ref, mpp),
            CodecKind::FixedNnls | CodecKind::KsvdNnls => deconvolve_nnls(&od, &self.spec.stains, self.spec.c_ref, mpp),
        }
    }

    fn decode(&self, conc: &ConcentrationImage) -> Result<RgbImage> {
        od_to_rgb(&reconstruct(conc, &self.spec.stains), conc.microns_per_pixel())
    }

    fn spec(&self) -> CodecSpec {
        self.spec.clone()
    }
}

pub fn restain_image(img: &RgbImage, codec: &dyn HdCodec, alpha: &AlphaParams) -> Result<RgbImage> {
    let conc = codec.encode(img)?;
    let mut out = codec.decode(&apply_kappa(&conc, alpha))?;
    out.set_microns_per_pixel(img.microns_per_pixel())?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub source_path: String,
    pub preset_name: String,
    /// Relative to the output directory.
    pub output_path: String,
    pub codec: CodecSpec,
    pub alpha: AlphaParams,
    pub microns_per_pixel: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestCounts {
    pub inputs: usize,
    pub presets: usize,
    pub outputs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileFailure {
    pub path: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    /// Wall-clock creation time; the only nondeterministic field.
    pub created_unix_secs: u64,
    pub counts: ManifestCounts,
    pub entries: Vec<ManifestEntry>,
    pub failures: Vec<FileFailure>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

impl DatasetManifest {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    /// `outputs == inputs × presets`, one entry per output, unique paths.
    pub fn is_consistent(&self) -> bool {
        let unique: HashSet<&str> = self.entries.iter().map(|e| e.output_path.as_str()).collect();
        self.counts.outputs == self.counts.inputs * self.counts.presets
            && self.entries.len() == self.counts.outputs
            && unique.len() == self.entries.len()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GenerateOptions {
    /// Assigned to every input, since PNGs do not carry physical scale.
    pub microns_per_pixel: f64,
    /// Worker threads; output bytes do not depend on it.
    pub jobs: usize,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        Self { microns_per_pixel: crate::colorspace::DEFAULT_MICRONS_PER_PIXEL, jobs: 1 }
    }
}

pub fn output_name(source: &Path, preset: &str) -> String {
    let stem = source.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    format!("{stem}__{preset}.png")
}

/// Restains every input with every preset into `out_dir` and writes
/// `manifest.json`. Unreadable inputs and failed writes are collected in
/// `failures`; the rest of the batch still runs.
pub fn generate_dataset(
    inputs: &[PathBuf],
    codec: &dyn HdCodec,
    presets: &[Preset],
    out_dir: &Path,
    options: GenerateOptions,
) -> Result<DatasetManifest> {
    let mut stems = HashSet::new();
    for input in inputs {
        let name = output_name(input, "");
        if !stems.insert(name) {
            return Err(Error::InvalidConfig(format!(
                "input stem of {} is not unique; output names would collide",
                input.display()
            )));
        }
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let spec = codec.spec();

    let process = |input: &PathBuf| -> Result<Vec<ManifestEntry>> {
        let img = read_png(input, options.microns_per_pixel)?;
        let conc = codec.encode(&img)?;
        presets
            .iter()
            .map(|preset| {
                let mut out = codec.decode(&apply_kappa(&conc, &preset.alpha))?;
                out.set_microns_per_pixel(img.microns_per_pixel())?;
                let name = output_name(input, &preset.name);
                write_png(&out_dir.join(&name), &out)?;
                Ok(ManifestEntry {
                    source_path: input.to_string_lossy().into_owned(),
                    preset_name: preset.name.clone(),
                    output_path: name,
                    codec: spec.clone(),
                    alpha: preset.alpha,
                    microns_per_pixel: img.microns_per_pixel(),
                })
            })
            .collect()
    };

    let results: Vec<Result<Vec<ManifestEntry>>> = with_jobs(options.jobs, || inputs.par_iter().map(process).collect());

    let mut entries = Vec::new();
    let mut failures = Vec::new();
    let mut processed = 0;
    for (input, result) in inputs.iter().zip(results) {
        match result {
            Ok(mut batch) => {
                processed += 1;
                entries.append(&mut batch);
            }
            Err(e) => failures.push(FileFailure { path: input.to_string_lossy().into_owned(), error: e.to_string() }),
        }
    }

    let manifest = DatasetManifest {
        created_unix_secs: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        counts: ManifestCounts { inputs: processed, presets: presets.len(), outputs: entries.len() },
        entries,
        failures,
    };
    let path = out_dir.join(MANIFEST_FILE);
    std::fs::write(&path, manifest.to_json()).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// Runs `f` on a dedicated pool with `jobs` threads (at least one).
pub fn with_jobs<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> T {
    match rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

pub const GALLERY_COLUMNS: usize = 4;
pub const GALLERY_SEPARATOR: usize = 2;

/// Tiles the source followed by one restained variant per preset,
/// left-to-right, wrapping every four tiles, with 2 px black separators.
pub fn render_preset_gallery(img: &RgbImage, codec: &dyn HdCodec, presets: &[Preset]) -> Result<RgbImage> {
    if presets.is_empty() {
        return Err(Error::InvalidConfig("gallery needs at least one preset".into()));
    }
    let conc = codec.encode(img)?;
    let mut tiles = vec![img.clone()];
    for preset in presets {
        tiles.push(codec.decode(&apply_kappa(&conc, &preset.alpha))?);
    }

    let (tw, th) = (img.width(), img.height());
    let cols = tiles.len().min(GALLERY_COLUMNS);
    let rows = tiles.len().div_ceil(GALLERY_COLUMNS);
    let width = cols * tw + (cols - 1) * GALLERY_SEPARATOR;
    let height = rows * th + (rows - 1) * GALLERY_SEPARATOR;
    let mut out = RgbImage::filled(width, height, [0, 0, 0], img.microns_per_pixel())?;
    for (t, tile) in tiles.iter().enumerate() {
        let ox = (t % GALLERY_COLUMNS) * (tw + GALLERY_SEPARATOR);
        let oy = (t / GALLERY_COLUMNS) * (th + GALLERY_SEPARATOR);
        for y in 0..th {
            for x in 0..tw {
                out.put_pixel(ox + x, oy + y, tile.pixel(x, y));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::restain::nuclear_presets;

    /// Two-stain image: every pixel is a nonnegative H/D mixture.
    fn sample() -> RgbImage {
        let m = fixed_hd_matrix();
        let (mh, md) = (m.hematoxylin(), m.dab());
        let pixels: Vec<[f64; 3]> = (0..48)
            .map(|i| {
                let (h, d) = ((i % 8) as f64 * 0.15, (i / 8) as f64 * 0.2);
                std::array::from_fn(|c| h * mh[c] + d * md[c])
            })
            .collect();
        od_to_rgb(&crate::colorspace::OdImage::from_pixels(8, 6, &pixels).unwrap(), 0.5).unwrap()
    }

    #[test]
    fn zero_alpha_gives_white() {
        for kind in [CodecKind::FixedInverse, CodecKind::FixedNnls] {
            let out = restain_image(&sample(), &ClassicalCodec::fixed(kind), &AlphaParams::ZERO).unwrap();
            assert!(out.as_bytes().iter().all(|&v| v == 255));
            assert_eq!(out.microns_per_pixel(), 0.5);
        }
    }

    #[test]
    fn gallery_layout() {
        let codec = ClassicalCodec::fixed(CodecKind::FixedInverse);
        let img = sample();
        let g = render_preset_gallery(&img, &codec, &nuclear_presets()).unwrap();
        assert_eq!((g.width(), g.height()), (4 * 8 + 3 * 2, 2 * 6 + 2));
        for y in 0..6 {
            for x in 0..8 {
                assert_eq!(g.pixel(x, y), img.pixel(x, y));
            }
        }
        // separator column and the unused fourth cell of row two are black
        assert_eq!(g.pixel(8, 0), [0, 0, 0]);
        assert_eq!(g.pixel(3 * 10 + 1, 8 + 1), [0, 0, 0]);

        let identity = [Preset { name: "id".into(), alpha: AlphaParams::IDENTITY }];
        let g = render_preset_gallery(&img, &codec, &identity).unwrap();
        assert_eq!((g.width(), g.height()), (18, 6));
        for y in 0..6 {
            for x in 0..8 {
                let (a, b) = (g.pixel(x, y), g.pixel(x + 10, y));
                for c in 0..3 {
                    assert!(a[c].abs_diff(b[c]) <= 1);
                }
            }
        }
        assert!(render_preset_gallery(&img, &codec, &[]).is_err());
    }

    #[test]
    fn codec_spec_json_and_kinds() {
        let spec = CodecSpec::fixed(CodecKind::FixedNnls);
        let text = serde_json::to_string(&spec).unwrap();
        assert!(text.starts_with(r#"{"kind":"fixed-nnls","stains":"#));
        assert_eq!(serde_json::from_str::<CodecSpec>(&text).unwrap(), spec);
        assert!("ksvd-nnls".parse::<CodecKind>().is_ok());
        assert!("rgb2hed".parse::<CodecKind>().is_err());
        assert!(CodecSpec::new(CodecKind::FixedInverse, fixed_hd_matrix().hd_only(), 2.0).is_err());
        assert_eq!(CodecSpec::new(CodecKind::FixedNnls, fixed_hd_matrix(), 2.0).unwrap().stains.len(), 2);
        assert!(CodecSpec::new(CodecKind::FixedNnls, fixed_hd_matrix(), -1.0).is_err());
    }

    #[test]
    fn duplicate_stems_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let inputs = vec![PathBuf::from("a/x.png"), PathBuf::from("b/x.png")];
        let codec = ClassicalCodec::fixed(CodecKind::FixedInverse);
        let err = generate_dataset(&inputs, &codec, &nuclear_presets(), dir.path(), GenerateOptions::default());
        assert!(matches!(err, Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn zero_presets_gives_empty_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let src = dir.path().join("in.png");
        crate::io::write_png(&src, &sample()).unwrap();
        let out = dir.path().join("out");
        let codec = ClassicalCodec::fixed(CodecKind::FixedInverse);
        let m = generate_dataset(&[src], &codec, &[], &out, GenerateOptions::default()).unwrap();
        assert_eq!(m.counts, ManifestCounts { inputs: 1, presets: 0, outputs: 0 });
        assert!(m.entries.is_empty() && m.is_consistent());
        assert!(out.join(MANIFEST_FILE).exists());
    }

    #[test]
    fn unreadable_input_is_reported_and_rest_processed() {
        let dir = tempfile::tempdir().unwrap();
        let good = dir.path().join("good.png");
        crate::io::write_png(&good, &sample()).unwrap();
        let bad = dir.path().join("bad.png");
        std::fs::write(&bad, b"nope").unwrap();
        let codec = ClassicalCodec::fixed(CodecKind::FixedNnls);
        let m = generate_dataset(
            &[bad.clone(), good],
            &codec,
            &nuclear_presets(),
            &dir.path().join("out"),
            GenerateOptions::default(),
        )
        .unwrap();
        assert_eq!(m.counts.outputs, 6);
        assert_eq!(m.failures.len(), 1);
        assert_eq!(m.failures[0].path, bad.to_string_lossy());
        assert!(m.is_consistent());
    }
}
