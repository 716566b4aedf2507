mod common;

use proptest::prelude::*;
use restainlab::detect::detect_in_plane;
use restainlab::synth::{synthesize_fields, OVERLAP_MARGIN};
use restainlab::{
    detect_nuclei, match_centers, restain_image, synthesize_fov, AlphaParams, ClassicalCodec, CodecKind,
    ConcentrationImage, DetectorConfig, HdCodec, SynthConfig,
};

fn clean() -> SynthConfig {
    SynthConfig { noise_sigma: 0.0, background_od: 0.0, ..SynthConfig::default() }
}

#[test]
fn default_fovs_honor_placement_invariants() {
    let base = SynthConfig::default();
    for i in 0..10 {
        let (img, truth) = synthesize_fov(&base.for_fov(i)).unwrap();
        assert_eq!((img.width(), img.height()), (256, 256));
        assert_eq!(truth.len(), 20);
        for (k, &(x, y)) in truth.centers.iter().enumerate() {
            assert!(x > 0.0 && y > 0.0 && x < 255.0 && y < 255.0);
            for (j, &(u, v)) in truth.centers.iter().enumerate().skip(k + 1) {
                let d = ((x - u).powi(2) + (y - v).powi(2)).sqrt();
                assert!(d >= OVERLAP_MARGIN * (truth.radii_px[k] + truth.radii_px[j]));
            }
        }
    }
}

#[test]
fn dab_free_config_encodes_to_near_zero_dab() {
    let cfg = SynthConfig { d_concentration: (0.0, 0.0), ..SynthConfig::default() };
    let tol = 3.0 * cfg.noise_sigma / 2.0;
    let (img, _) = synthesize_fov(&cfg).unwrap();
    for kind in [CodecKind::FixedInverse, CodecKind::FixedNnls] {
        let conc = ClassicalCodec::fixed(kind).encode(&img).unwrap();
        let mean = conc.d_plane().iter().sum::<f64>() / conc.len() as f64;
        assert!(mean <= tol, "{kind:?}: mean DAB {mean} > {tol}");
    }
}

#[test]
fn fields_match_rendered_image_without_noise() {
    let cfg = clean();
    let (fields, truth) = synthesize_fields(&cfg).unwrap();
    let (img, truth2) = synthesize_fov(&cfg).unwrap();
    assert_eq!(truth, truth2);
    // Every nucleus center carries full hematoxylin and no DAB.
    for &(x, y) in &truth.centers {
        let i = y.round() as usize * 256 + x.round() as usize;
        assert!(fields.hematoxylin[i] > 0.0 && fields.dab[i] == 0.0);
        assert_ne!(img.pixel(x.round() as usize, y.round() as usize), [255, 255, 255]);
    }
}

#[test]
fn clean_fov_after_nuclear_restain_yields_every_nucleus() {
    let (img, truth) = synthesize_fov(&clean()).unwrap();
    let codec = ClassicalCodec::fixed(CodecKind::FixedInverse);
    let restained = restain_image(&img, &codec, &AlphaParams::nuclear(1.0, 1.0)).unwrap();
    let det = detect_nuclei(&codec.encode(&restained).unwrap(), &DetectorConfig::default()).unwrap();
    assert_eq!(det.len(), truth.len());
    let m = match_centers(&truth.centers, &det.centers, 1.5, 0.5);
    assert_eq!(m.pairs.len(), truth.len());
}

#[test]
fn single_four_micron_disk_is_found_once() {
    let cfg = SynthConfig {
        n_nuclei: 1,
        nucleus_radius_um: (4.0, 4.0),
        h_concentration: (1.0, 1.0),
        d_concentration: (0.0, 0.0),
        ..clean()
    };
    let (fields, truth) = synthesize_fields(&cfg).unwrap();
    let plane: Vec<f64> = fields.hematoxylin.iter().map(|v| v / 2.0).collect();
    let det = detect_in_plane(&plane, 256, 256, &DetectorConfig::default());
    assert_eq!(det.len(), 1);
    let (cx, cy) = truth.centers[0];
    let (x, y) = det.centers[0];
    assert!(((x - cx).powi(2) + (y - cy).powi(2)).sqrt() <= 1.0);
}

#[test]
fn detections_are_sorted_and_above_threshold() {
    let (img, _) = synthesize_fov(&SynthConfig::default()).unwrap();
    let codec = ClassicalCodec::fixed(CodecKind::FixedNnls);
    let conc = restainlab::pipeline::HdCodec::encode(&codec, &img).unwrap();
    let cfg = DetectorConfig::default();
    let det = detect_nuclei(&conc, &cfg).unwrap();
    assert!(det.scores.windows(2).all(|w| w[0] >= w[1]));
    assert!(det.scores.iter().all(|&s| s >= cfg.threshold));
    assert!(det.centers.iter().all(|&(x, y)| x >= 0.0 && y >= 0.0 && x < 256.0 && y < 256.0));
}

fn blob_plane() -> impl Strategy<Value = (Vec<(f64, f64, f64)>, f64)> {
    (prop::collection::vec((15.0f64..49.0, 15.0f64..49.0, 0.05f64..1.0), 0..6), 0.02f64..0.5)
}

fn render(w: usize, h: usize, blobs: &[(f64, f64, f64)], dx: usize, dy: usize) -> Vec<f64> {
    let mut plane = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            for &(cx, cy, a) in blobs {
                let r2 = (x as f64 - cx - dx as f64).powi(2) + (y as f64 - cy - dy as f64).powi(2);
                plane[y * w + x] += a * (-r2 / 8.0).exp();
            }
        }
    }
    plane.iter().map(|v| v.min(1.0)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn integer_shifts_move_detections_exactly((blobs, thr) in blob_plane(), dx in 0usize..8, dy in 0usize..8) {
        // 6 px (⌈3σ⌉) of zero margin around the content on both canvases
        let cfg = DetectorConfig { threshold: thr, ..DetectorConfig::default() };
        let a = detect_in_plane(&render(80, 80, &blobs, 0, 0), 80, 80, &cfg);
        let b = detect_in_plane(&render(80, 80, &blobs, dx, dy), 80, 80, &cfg);
        let shifted: Vec<(f64, f64)> = a.centers.iter().map(|&(x, y)| (x + dx as f64, y + dy as f64)).collect();
        prop_assert_eq!(shifted, b.centers);
    }

    #[test]
    fn raising_the_threshold_never_adds_detections((blobs, thr) in blob_plane(), extra in 0.0f64..0.5) {
        let plane = render(64, 64, &blobs, 0, 0);
        let lo = DetectorConfig { threshold: thr, ..DetectorConfig::default() };
        let hi = DetectorConfig { threshold: (thr + extra).min(1.0), ..DetectorConfig::default() };
        let a = detect_in_plane(&plane, 64, 64, &lo);
        let b = detect_in_plane(&plane, 64, 64, &hi);
        prop_assert!(b.len() <= a.len());
        let conc = ConcentrationImage::new(64, 64, plane, vec![0.0; 64 * 64], 2.0, 0.5).unwrap();
        prop_assert_eq!(detect_nuclei(&conc, &lo).unwrap(), a);
    }
}
