//! Subcommand implementations.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use restainlab::io::{format_centers_csv, read_centers_csv, read_png, write_png, write_text};
use restainlab::ksvd::foreground;
use restainlab::pipeline::with_jobs;
use restainlab::synth::format_ground_truth_csv;
use restainlab::{
    detect_nuclei, estimate_stain_matrix, fixed_hd_matrix, generate_dataset, match_centers, nuclear_presets,
    render_report, restain_image, rgb_to_od, synthesize_fov, DetectorConfig, Error, GenerateOptions, HdCodec,
    KsvdOptions, MatchResult, MetricsReport, RgbImage,
};
use serde::Deserialize;

use crate::config::{
    build_codec, lookup_preset, parse_alpha, parse_preset_list, read_stains, synth_config, CodecFlags, RunConfig,
};
use crate::outcome::{Classify, CmdResult, Failure, Status};
use crate::{CodecArgs, DetectArgs, EstimateArgs, EvalArgs, GenerateArgs, RestainArgs, SynthArgs};

/// Configuration-type library errors are usage errors, the rest data errors.
fn classify(e: Error, context: impl std::fmt::Display) -> Failure {
    let usage = match &e {
        Error::InvalidConfig(_) | Error::InvalidStainMatrix(_) => true,
        Error::Io { source, .. } => source.kind() == std::io::ErrorKind::NotFound,
        _ => false,
    };
    let e = anyhow::Error::new(e).context(context.to_string());
    if usage {
        Failure::Usage(e)
    } else {
        Failure::Data(e)
    }
}

fn codec_flags(a: &CodecArgs) -> CodecFlags<'_> {
    CodecFlags { kind: a.codec, stains: a.stains.as_deref(), c_ref: a.c_ref }
}

fn require_file(path: &Path) -> Result<(), Failure> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure::usage(format!("no such file: {}", path.display())))
    }
}

/// PNG files directly inside `dir`, sorted by name.
fn list_pngs(dir: &Path) -> Result<Vec<PathBuf>, Failure> {
    let entries = std::fs::read_dir(dir).usage(format!("cannot list {}", dir.display()))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.data(format!("cannot list {}", dir.display()))?.path();
        let is_png = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if is_png && path.is_file() {
            paths.push(path);
        }
    }
    paths.sort();
    Ok(paths)
}

fn write_output(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => write_text(p, text).map_err(|e| classify(e, "cannot write output")),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn report_failures(failures: &[(String, String)]) -> Status {
    for (path, error) in failures {
        eprintln!("error: {path}: {error}");
    }
    if failures.is_empty() {
        Status::Success
    } else {
        Status::Partial
    }
}

pub fn synth(a: SynthArgs, jobs: usize) -> CmdResult {
    let cfg = RunConfig::load(a.config.as_deref())?;
    let base = synth_config(&cfg, a.seed, None)?;
    if a.count == 0 {
        println!("wrote 0 FOVs");
        return Ok(Status::Success);
    }
    std::fs::create_dir_all(&a.out).data(format!("cannot create {}", a.out.display()))?;

    let results: Vec<restainlab::Result<usize>> = with_jobs(jobs, || {
        (0..a.count)
            .into_par_iter()
            .map(|i| {
                let (img, truth) = synthesize_fov(&base.for_fov(i))?;
                write_png(&a.out.join(format!("fov_{i:04}.png")), &img)?;
                write_text(&a.out.join(format!("fov_{i:04}.csv")), &format_ground_truth_csv(&truth))?;
                Ok(truth.len())
            })
            .collect()
    });
    let mut nuclei = 0;
    for r in results {
        nuclei += r.map_err(|e| classify(e, "synthesis failed"))?;
    }
    println!("wrote {} FOVs ({nuclei} nuclei) to {}", a.count, a.out.display());
    Ok(Status::Success)
}

pub fn restain(a: RestainArgs) -> CmdResult {
    let cfg = RunConfig::load(a.config.as_deref())?;
    let mpp = cfg.microns_per_pixel(a.um_per_px)?;
    let alpha = match (&a.preset, &a.alpha) {
        (Some(name), _) => lookup_preset(name)?.alpha,
        (None, Some(json)) => parse_alpha(json)?,
        (None, None) => {
            cfg.alpha.ok_or_else(|| Failure::usage("give --preset NAME or --alpha JSON (or `alpha` in the config)"))?
        }
    };
    alpha.validate().usage("invalid alpha")?;
    let codec = build_codec(&codec_flags(&a.codec), &cfg)?;
    require_file(&a.input)?;
    let img = read_png(&a.input, mpp).map_err(|e| classify(e, "cannot read input"))?;
    let out = restain_image(&img, &codec, &alpha).map_err(|e| classify(e, "restaining failed"))?;
    write_png(&a.out, &out).map_err(|e| classify(e, "cannot write output"))?;
    Ok(Status::Success)
}

pub fn generate(a: GenerateArgs, jobs: usize) -> CmdResult {
    let cfg = RunConfig::load(a.config.as_deref())?;
    let mpp = cfg.microns_per_pixel(a.um_per_px)?;
    let presets = match (&a.presets, &cfg.presets) {
        (Some(spec), _) => parse_preset_list(spec)?,
        (None, Some(names)) => parse_preset_list(&names.join(","))?,
        (None, None) => nuclear_presets(),
    };
    let codec = build_codec(&codec_flags(&a.codec), &cfg)?;
    if !a.input_dir.is_dir() {
        return Err(Failure::usage(format!("not a directory: {}", a.input_dir.display())));
    }
    let inputs = list_pngs(&a.input_dir)?;
    let options = GenerateOptions { microns_per_pixel: mpp, jobs };
    let manifest = generate_dataset(&inputs, &codec, &presets, &a.out, options)
        .map_err(|e| classify(e, "dataset generation failed"))?;
    println!(
        "{} inputs x {} presets -> {} outputs in {}",
        manifest.counts.inputs,
        manifest.counts.presets,
        manifest.counts.outputs,
        a.out.display()
    );
    let failures: Vec<(String, String)> = manifest.failures.iter().map(|f| (f.path.clone(), f.error.clone())).collect();
    Ok(report_failures(&failures))
}

/// Expands directories into their PNGs; plain paths must exist.
fn expand_inputs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>, Failure> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            out.extend(list_pngs(p)?);
        } else {
            require_file(p)?;
            out.push(p.clone());
        }
    }
    Ok(out)
}

pub fn estimate_stains(a: EstimateArgs, jobs: usize) -> CmdResult {
    if a.max_pixels == 0 {
        return Err(Failure::usage("--max-pixels must be at least 1"));
    }
    let init = match &a.init {
        Some(path) => read_stains(path)?,
        None => fixed_hd_matrix(),
    };
    let inputs = expand_inputs(&a.inputs)?;
    if inputs.is_empty() {
        return Err(Failure::usage("no input images"));
    }
    let options = KsvdOptions { max_iters: a.iters, tol: a.tol };

    let estimate = with_jobs(jobs, || -> Result<_, Failure> {
        let per_image: Vec<restainlab::Result<Vec<[f64; 3]>>> = inputs
            .par_iter()
            .map(|p| Ok(foreground(&rgb_to_od(&read_png(p, 0.5)?).pixels().collect::<Vec<_>>())))
            .collect();
        let mut pixels = Vec::new();
        for (path, r) in inputs.iter().zip(per_image) {
            pixels.extend(r.map_err(|e| classify(e, format!("cannot read {}", path.display())))?);
        }
        if pixels.len() > a.max_pixels {
            let n = pixels.len();
            pixels = (0..a.max_pixels).map(|k| pixels[k * n / a.max_pixels]).collect();
        }
        estimate_stain_matrix(&pixels, &init, options).map_err(|e| classify(e, "stain estimation failed"))
    })?;

    let first = estimate.objectives.first().copied().unwrap_or(0.0);
    let last = estimate.objectives.last().copied().unwrap_or(0.0);
    eprintln!(
        "{} foreground pixels, {} iterations, residual {first:.6} -> {last:.6}",
        estimate.foreground_pixels, estimate.iterations
    );
    let mut json = serde_json::to_string_pretty(&estimate.stains).expect("stain matrix serializes");
    json.push('\n');
    write_output(a.out.as_deref(), &json)?;
    Ok(Status::Success)
}

fn detect_one(path: &Path, codec: &dyn HdCodec, cfg: &DetectorConfig, mpp: f64) -> restainlab::Result<String> {
    let img: RgbImage = read_png(path, mpp)?;
    let det = detect_nuclei(&codec.encode(&img)?, cfg)?;
    Ok(format_centers_csv(&det.records(), true))
}

pub fn detect(a: DetectArgs, jobs: usize) -> CmdResult {
    let cfg = RunConfig::load(a.config.as_deref())?;
    let mpp = cfg.microns_per_pixel(a.um_per_px)?;
    let detector = match &a.detector {
        Some(path) => {
            let text = std::fs::read_to_string(path).usage(format!("cannot read {}", path.display()))?;
            serde_json::from_str(&text).usage(format!("invalid detector config {}", path.display()))?
        }
        None => cfg.detector(),
    };
    detector.validate().usage("invalid detector config")?;
    let codec = build_codec(&codec_flags(&a.codec), &cfg)?;

    if !a.input.is_dir() {
        require_file(&a.input)?;
        let csv = detect_one(&a.input, &codec, &detector, mpp).map_err(|e| classify(e, "detection failed"))?;
        write_output(a.out.as_deref(), &csv)?;
        return Ok(Status::Success);
    }

    let out_dir = a.out.as_deref().ok_or_else(|| Failure::usage("--out DIR is required for a directory input"))?;
    let inputs = list_pngs(&a.input)?;
    std::fs::create_dir_all(out_dir).data(format!("cannot create {}", out_dir.display()))?;
    let results: Vec<restainlab::Result<()>> = with_jobs(jobs, || {
        inputs
            .par_iter()
            .map(|p| {
                let csv = detect_one(p, &codec, &detector, mpp)?;
                let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                write_text(&out_dir.join(format!("{stem}.csv")), &csv)
            })
            .collect()
    });
    let failures: Vec<(String, String)> = inputs
        .iter()
        .zip(results)
        .filter_map(|(p, r)| r.err().map(|e| (p.display().to_string(), e.to_string())))
        .collect();
    println!("{} images, {} CSVs written to {}", inputs.len(), inputs.len() - failures.len(), out_dir.display());
    Ok(report_failures(&failures))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PairEntry {
    label: Option<String>,
    gt: PathBuf,
    pred: PathBuf,
}

fn read_points(path: &Path) -> Result<Vec<(f64, f64)>, Failure> {
    require_file(path)?;
    let records = read_centers_csv(path).map_err(|e| classify(e, "cannot read centers"))?;
    Ok(records.iter().map(|r| (r.x, r.y)).collect())
}

pub fn eval(a: EvalArgs) -> CmdResult {
    if !(a.max_dist_um.is_finite() && a.max_dist_um > 0.0) {
        return Err(Failure::usage(format!("--max-dist-um must be positive, got {}", a.max_dist_um)));
    }
    if !(a.um_per_px.is_finite() && a.um_per_px > 0.0) {
        return Err(Failure::usage(format!("--um-per-px must be positive, got {}", a.um_per_px)));
    }

    let entries: Vec<(String, PathBuf, PathBuf)> = match (&a.pairs, &a.gt, &a.pred) {
        (Some(pairs), _, _) => {
            let text = std::fs::read_to_string(pairs).usage(format!("cannot read {}", pairs.display()))?;
            let list: Vec<PairEntry> =
                serde_json::from_str(&text).usage(format!("invalid pairs file {}", pairs.display()))?;
            let base = pairs.parent().unwrap_or(Path::new(""));
            list.into_iter()
                .map(|e| (e.label.unwrap_or_else(|| "run".into()), base.join(e.gt), base.join(e.pred)))
                .collect()
        }
        (None, Some(gt), Some(pred)) => vec![(a.label.clone(), gt.clone(), pred.clone())],
        _ => return Err(Failure::usage("give --gt and --pred, or --pairs")),
    };

    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Vec<MatchResult>> = HashMap::new();
    for (label, gt, pred) in entries {
        let m = match_centers(&read_points(&gt)?, &read_points(&pred)?, a.max_dist_um, a.um_per_px);
        if !groups.contains_key(&label) {
            order.push(label.clone());
        }
        groups.entry(label).or_default().push(m);
    }
    let reports: Vec<MetricsReport> =
        order.iter().map(|label| restainlab::eval::aggregate(&groups[label], label)).collect();
    write_output(a.out.as_deref(), &render_report(&reports, a.format))?;
    Ok(Status::Success)
}

pub fn presets() -> CmdResult {
    let mut json = serde_json::to_string_pretty(&nuclear_presets()).expect("presets serialize");
    json.push('\n');
    print!("{json}");
    Ok(Status::Success)
}
