//! restainlab: in-silico restaining of IHC images.
//!
//! RGB images are separated into hematoxylin (H) and DAB (D) concentration
//! planes by a stain codec, remixed with a clamped linear map, and
//! recomposed. Around that core sit a synthetic FOV generator, a simple
//! nucleus detector, and a matching-based evaluation harness.
//!
//! ```text
//! RgbImage --encode--> ConcentrationImage --apply_kappa--> ConcentrationImage --decode--> RgbImage
//! ```

pub mod colorspace;
pub mod deconv;
pub mod detect;
pub mod error;
pub mod eval;
pub mod hungarian;
pub mod io;
pub mod ksvd;
pub mod nnls;
pub mod pipeline;
pub mod restain;
pub mod synth;

pub use colorspace::{od_to_rgb, rgb_to_od, OdImage, RgbImage};
pub use deconv::{deconvolve_inverse, deconvolve_nnls, fixed_hd_matrix, reconstruct, ConcentrationImage, StainMatrix};
pub use detect::{detect_nuclei, DetectionList, DetectorConfig};
pub use error::{Error, Result};
pub use eval::{compute_metrics, match_centers, render_report, MatchResult, MetricsReport, ReportFormat};
pub use ksvd::{estimate_stain_matrix, KsvdOptions, StainEstimate};
pub use pipeline::{
    generate_dataset, render_preset_gallery, restain_image, ClassicalCodec, CodecKind, CodecSpec, DatasetManifest,
    GenerateOptions, HdCodec,
};
pub use restain::{apply_kappa, nuclear_presets, AlphaParams, Preset};
pub use synth::{synthesize_fov, GroundTruth, SynthConfig};
