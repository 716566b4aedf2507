//! `restainlab`: synthesize FOVs, estimate stains, restain, build datasets,
//! detect nuclei and evaluate detections from the command line.

mod commands;
mod config;
mod outcome;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use restainlab::eval::DEFAULT_MAX_DISTANCE_UM;
use restainlab::ksvd::{DEFAULT_MAX_ITERS, DEFAULT_TOL};
use restainlab::{CodecKind, ReportFormat};

#[derive(Debug, Parser)]
#[command(name = "restainlab", version, about = "In-silico restaining of H-DAB IHC images")]
struct Cli {
    /// Worker threads (default: all cores). Outputs do not depend on it.
    #[arg(long, global = true, env = "RESTAINLAB_JOBS", value_parser = clap::value_parser!(u16).range(1..))]
    jobs: Option<u16>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write seeded synthetic membrane-marker FOVs with ground-truth centers.
    Synth(SynthArgs),
    /// Restain one image with a preset or explicit mixing coefficients.
    Restain(RestainArgs),
    /// Restain every PNG in a directory with a list of presets.
    Generate(GenerateArgs),
    /// Estimate the hematoxylin and DAB vectors from images.
    EstimateStains(EstimateArgs),
    /// Detect nucleus centers on the hematoxylin plane.
    Detect(DetectArgs),
    /// Match detections to ground truth and report F1 / sensitivity / precision.
    Eval(EvalArgs),
    /// Print the six nuclear-marker presets as JSON.
    Presets,
}

#[derive(Debug, Args)]
struct CodecArgs {
    /// Stain codec: fixed-inverse, fixed-nnls or ksvd-nnls (default: config, else fixed-inverse).
    #[arg(long, value_parser = parse_codec)]
    codec: Option<CodecKind>,

    /// Stain matrix JSON ({"labels": [...], "vectors": [...]}); required for ksvd-nnls.
    #[arg(long)]
    stains: Option<PathBuf>,

    /// Absolute concentration mapped to 1.0 (default: config, else 2.0).
    #[arg(long)]
    c_ref: Option<f64>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Run config JSON; its `synth` section, `seed` and `microns_per_pixel` are used.
    #[arg(short, long)]
    config: Option<PathBuf>,

    /// Number of FOVs to write.
    #[arg(short = 'n', long, default_value_t = 1)]
    count: u64,

    /// Base seed; FOV i uses a seed derived from it (default: config, else 0).
    #[arg(long)]
    seed: Option<u64>,

    /// Output directory for fov_NNNN.png and fov_NNNN.csv.
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct RestainArgs {
    /// Input PNG.
    input: PathBuf,

    /// Output PNG.
    #[arg(short, long)]
    out: PathBuf,

    /// Preset name, e.g. hh1.00_dh1.00 (see `restainlab presets`).
    #[arg(long, conflicts_with = "alpha")]
    preset: Option<String>,

    /// Mixing coefficients as JSON: {"hh":1,"hd":0,"dh":1,"dd":0}.
    #[arg(long)]
    alpha: Option<String>,

    #[command(flatten)]
    codec: CodecArgs,

    /// Run config JSON (codec, alpha, microns_per_pixel).
    #[arg(short, long)]
    config: Option<PathBuf>,

    /// Pixel size in µm (default: config, else 0.5).
    #[arg(long)]
    um_per_px: Option<f64>,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    /// Directory of input PNGs (not recursive).
    input_dir: PathBuf,

    /// Output directory for <stem>__<preset>.png and manifest.json.
    #[arg(short, long)]
    out: PathBuf,

    /// `all` or comma-separated preset names (default: config `presets`, else all).
    #[arg(long)]
    presets: Option<String>,

    #[command(flatten)]
    codec: CodecArgs,

    /// Run config JSON (codec, presets, microns_per_pixel).
    #[arg(short, long)]
    config: Option<PathBuf>,

    /// Pixel size in µm recorded for every input (default: config, else 0.5).
    #[arg(long)]
    um_per_px: Option<f64>,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    /// Input PNGs or directories of PNGs.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,

    /// Output stain matrix JSON (default: stdout).
    #[arg(short, long)]
    out: Option<PathBuf>,

    /// Maximum K-SVD iterations.
    #[arg(long, default_value_t = DEFAULT_MAX_ITERS)]
    iters: usize,

    /// Stop when the relative objective decrease drops below this.
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,

    /// Initial stain matrix JSON (default: the fixed H-DAB reference).
    #[arg(long)]
    init: Option<PathBuf>,

    /// Cap on foreground pixels used, taken at an even stride.
    #[arg(long, default_value_t = 200_000)]
    max_pixels: usize,
}

#[derive(Debug, Args)]
struct DetectArgs {
    /// Input PNG or directory of PNGs.
    input: PathBuf,

    /// Output CSV for a single image (default: stdout) or directory for a directory input.
    #[arg(short, long)]
    out: Option<PathBuf>,

    /// Detector config JSON ({"sigma_px", "threshold", "min_distance_px"}).
    #[arg(long)]
    detector: Option<PathBuf>,

    #[command(flatten)]
    codec: CodecArgs,

    /// Run config JSON (codec, detector, microns_per_pixel).
    #[arg(short, long)]
    config: Option<PathBuf>,

    /// Pixel size in µm (default: config, else 0.5).
    #[arg(long)]
    um_per_px: Option<f64>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Ground-truth CSV (x,y).
    #[arg(long, requires = "pred", conflicts_with = "pairs")]
    gt: Option<PathBuf>,

    /// Prediction CSV (x,y[,score]).
    #[arg(long, requires = "gt")]
    pred: Option<PathBuf>,

    /// Row label for --gt/--pred.
    #[arg(long, default_value = "run")]
    label: String,

    /// JSON list of {"label"?, "gt", "pred"}; entries sharing a label are micro-averaged into one row.
    #[arg(long, required_unless_present = "gt")]
    pairs: Option<PathBuf>,

    /// Matching gate in µm.
    #[arg(long, default_value_t = DEFAULT_MAX_DISTANCE_UM)]
    max_dist_um: f64,

    /// Pixel size in µm of the CSV coordinates.
    #[arg(long, default_value_t = 0.5)]
    um_per_px: f64,

    /// Report format: text, csv or json.
    #[arg(long, value_parser = parse_format, default_value = "text")]
    format: ReportFormat,

    /// Output file (default: stdout).
    #[arg(short, long)]
    out: Option<PathBuf>,
}

fn parse_codec(s: &str) -> Result<CodecKind, String> {
    s.parse().map_err(|e: restainlab::Error| e.to_string())
}

fn parse_format(s: &str) -> Result<ReportFormat, String> {
    s.parse()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let jobs = cli.jobs.map(usize::from).unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let result = match cli.command {
        Command::Synth(a) => commands::synth(a, jobs),
        Command::Restain(a) => commands::restain(a),
        Command::Generate(a) => commands::generate(a, jobs),
        Command::EstimateStains(a) => commands::estimate_stains(a, jobs),
        Command::Detect(a) => commands::detect(a, jobs),
        Command::Eval(a) => commands::eval(a),
        Command::Presets => commands::presets(),
    };
    match result {
        Ok(status) => status.exit_code(),
        Err(failure) => {
            eprintln!("error: {:#}", failure.error());
            failure.exit_code()
        }
    }
}
