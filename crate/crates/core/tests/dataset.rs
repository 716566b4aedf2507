mod common;

use std::path::{Path, PathBuf};

use common::two_stain_image;
use restainlab::io::{read_png, write_png};
use restainlab::pipeline::{output_name, MANIFEST_FILE};
use restainlab::{
    generate_dataset, nuclear_presets, render_preset_gallery, AlphaParams, ClassicalCodec, CodecKind, DatasetManifest,
    GenerateOptions, Preset,
};

fn write_inputs(dir: &Path, n: usize) -> Vec<PathBuf> {
    std::fs::create_dir_all(dir).unwrap();
    (0..n)
        .map(|i| {
            let path = dir.join(format!("fov_{i:04}.png"));
            write_png(&path, &two_stain_image(i as u64, 4, 4, 1.0)).unwrap();
            path
        })
        .collect()
}

fn run(n: usize) -> DatasetManifest {
    let tmp = tempfile::tempdir().unwrap();
    let inputs = write_inputs(&tmp.path().join("in"), n);
    let out = tmp.path().join("out");
    let codec = ClassicalCodec::fixed(CodecKind::FixedInverse);
    let options = GenerateOptions { jobs: 4, ..GenerateOptions::default() };
    let manifest = generate_dataset(&inputs, &codec, &nuclear_presets(), &out, options).unwrap();
    let pngs = std::fs::read_dir(&out)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "png"))
        .count();
    assert_eq!(pngs, manifest.counts.outputs);
    let on_disk: DatasetManifest =
        serde_json::from_str(&std::fs::read_to_string(out.join(MANIFEST_FILE)).unwrap()).unwrap();
    assert_eq!(on_disk, manifest);
    manifest
}

#[test]
fn training_split_multiplicity() {
    let m = run(421);
    assert_eq!(m.counts.outputs, 2526);
    assert!(m.is_consistent() && m.failures.is_empty());
}

#[test]
fn validation_split_multiplicity() {
    let m = run(179);
    assert_eq!(m.counts.outputs, 1074);
    assert!(m.is_consistent());
}

#[test]
fn entries_follow_input_then_preset_order() {
    let m = run(3);
    let presets = nuclear_presets();
    for (k, e) in m.entries.iter().enumerate() {
        let (i, p) = (k / presets.len(), k % presets.len());
        assert_eq!(e.preset_name, presets[p].name);
        assert_eq!(e.output_path, format!("fov_{i:04}__{}.png", presets[p].name));
        assert_eq!(e.alpha, presets[p].alpha);
    }
}

#[test]
fn no_presets_gives_empty_consistent_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let inputs = write_inputs(tmp.path(), 1);
    let codec = ClassicalCodec::fixed(CodecKind::FixedNnls);
    let m = generate_dataset(&inputs, &codec, &[], &tmp.path().join("out"), GenerateOptions::default()).unwrap();
    assert_eq!((m.counts.inputs, m.counts.presets, m.counts.outputs), (1, 0, 0));
    assert!(m.entries.is_empty() && m.is_consistent());
}

#[test]
fn unreadable_inputs_are_reported_not_fatal() {
    let tmp = tempfile::tempdir().unwrap();
    let mut inputs = write_inputs(tmp.path(), 2);
    let broken = tmp.path().join("broken.png");
    std::fs::write(&broken, b"not a png").unwrap();
    inputs.insert(1, broken.clone());
    inputs.push(tmp.path().join("missing.png"));
    let codec = ClassicalCodec::fixed(CodecKind::FixedInverse);
    let m = generate_dataset(&inputs, &codec, &nuclear_presets(), &tmp.path().join("out"), GenerateOptions::default())
        .unwrap();
    assert_eq!(m.counts.inputs, 2);
    assert_eq!(m.counts.outputs, 12);
    assert!(m.is_consistent());
    assert_eq!(m.failures.len(), 2);
    assert_eq!(m.failures[0].path, broken.to_string_lossy());
}

#[test]
fn output_bytes_do_not_depend_on_thread_count() {
    let tmp = tempfile::tempdir().unwrap();
    let inputs: Vec<PathBuf> = (0..12)
        .map(|i| {
            let p = tmp.path().join(format!("src{i}.png"));
            write_png(&p, &two_stain_image(50 + i, 32, 24, 1.5)).unwrap();
            p
        })
        .collect();
    let codec = ClassicalCodec::fixed(CodecKind::FixedNnls);
    let mut runs = Vec::new();
    for jobs in [1, 8] {
        let out = tmp.path().join(format!("out{jobs}"));
        let m =
            generate_dataset(&inputs, &codec, &nuclear_presets(), &out, GenerateOptions { jobs, ..Default::default() })
                .unwrap();
        let files: Vec<Vec<u8>> = m.entries.iter().map(|e| std::fs::read(out.join(&e.output_path)).unwrap()).collect();
        runs.push((m.entries, m.counts, files));
    }
    assert_eq!(runs[0], runs[1]);
}

#[test]
fn output_naming() {
    assert_eq!(output_name(Path::new("/a/b/slide 1.png"), "hh1.00_dh0.25"), "slide 1__hh1.00_dh0.25.png");
}

#[test]
fn gallery_layout() {
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("g.png");
    write_png(&src, &two_stain_image(1, 10, 6, 1.0)).unwrap();
    let img = read_png(&src, 0.5).unwrap();
    let codec = ClassicalCodec::fixed(CodecKind::FixedInverse);

    let g = render_preset_gallery(&img, &codec, &nuclear_presets()).unwrap();
    // 7 tiles: 4 + 3, two-pixel separators
    assert_eq!((g.width(), g.height()), (4 * 10 + 3 * 2, 2 * 6 + 2));
    for y in 0..6 {
        for x in 0..10 {
            assert_eq!(g.pixel(x, y), img.pixel(x, y));
        }
    }
    assert_eq!(g.pixel(10, 0), [0, 0, 0]);
    assert_eq!(g.pixel(3 * 12 + 5, 8 + 3), [0, 0, 0], "unused cell stays black");

    let identity = [Preset { name: "id".into(), alpha: AlphaParams::IDENTITY }];
    let g = render_preset_gallery(&img, &codec, &identity).unwrap();
    assert_eq!((g.width(), g.height()), (22, 6));
    for y in 0..6 {
        for x in 0..10 {
            let (a, b) = (g.pixel(x, y), g.pixel(12 + x, y));
            assert!((0..3).all(|c| a[c].abs_diff(b[c]) <= 1));
        }
    }
    assert!(render_preset_gallery(&img, &codec, &[]).is_err());
}
