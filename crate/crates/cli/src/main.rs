//! `occlane`: synthesise, augment, run, ablate and evaluate.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error.

mod commands;
mod config;
mod eval;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "occlane",
    version,
    about = "Occlusion-aware lane detection toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a seeded corpus of road scenes with lane ground truth.
    Synth(SynthArgs),
    /// Write the built-in procedural occluder sprites as RGBA PNGs.
    Sprites(SpritesArgs),
    /// Composite occluder sprites onto a clear corpus.
    Augment(AugmentArgs),
    /// Run detect, inpaint and segment over a dataset and score it.
    Run(RunArgs),
    /// Score the four data conditions: clear, occluded, inpainted with
    /// detector boxes and inpainted with ground-truth boxes.
    Ablate(AblateArgs),
    /// Score predicted masks against ground truth, paired by frame id.
    Eval(EvalArgs),
    /// Serve a reference node on stdin/stdout.
    ServeNode(ServeNodeArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Number of scenes.
    #[arg(long)]
    count: usize,
    /// Corpus seed.
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// JSON scene parameters; the flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    width: Option<u32>,
    #[arg(long)]
    height: Option<u32>,
    #[arg(long)]
    horizon_y: Option<u32>,
    #[arg(long)]
    lane_count: Option<u32>,
    #[arg(long)]
    curvature: Option<f64>,
    #[arg(long)]
    lane_stroke: Option<u32>,
    #[arg(long)]
    noise_sigma: Option<f64>,
}

#[derive(Debug, Args)]
struct SpritesArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct AugmentArgs {
    /// Manifest of the clear corpus.
    #[arg(long)]
    manifest: PathBuf,
    /// Directory of `<class>_<n>.png` RGBA sprites.
    #[arg(long)]
    sprites: PathBuf,
    /// Placement seed.
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// JSON placement policy; the flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    min_occluders: Option<u32>,
    #[arg(long)]
    max_occluders: Option<u32>,
    #[arg(long)]
    max_mutual_iou: Option<f64>,
    #[arg(long)]
    max_retries: Option<u32>,
    /// Place sprites at their nominal size regardless of depth.
    #[arg(long)]
    no_perspective: bool,
}

#[derive(Debug, Args)]
struct PipelineArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// JSON pipeline configuration; defaults apply to missing fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Frames processed concurrently; overrides the config.
    #[arg(long)]
    workers: Option<usize>,
    /// Keep node scratch directories after the run.
    #[arg(long)]
    keep_scratch: bool,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Debug, Args)]
struct AblateArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Comparison panels for the first K frames of the manifest.
    #[arg(long, default_value_t = 4)]
    panels: usize,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Directory of predicted masks named `<id>.png`.
    #[arg(long)]
    pred: PathBuf,
    /// Directory of ground-truth masks named `<id>.png`.
    #[arg(
        long,
        conflicts_with = "manifest",
        required_unless_present = "manifest"
    )]
    gt: Option<PathBuf>,
    /// Take ground truth from a dataset manifest instead.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Where to write `reports/eval.{csv,json}`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Mask values at or above this count as lane.
    #[arg(long, default_value_t = 128)]
    threshold: u8,
    /// Ground-truth dilation radius applied before scoring.
    #[arg(long, default_value_t = 0)]
    dilation: u32,
}

#[derive(Debug, Args)]
struct ServeNodeArgs {
    /// detect, inpaint or segment.
    #[arg(long)]
    role: String,
    /// identity, oracle, constant, or one of the fault-injection behaviours.
    #[arg(long)]
    behavior: Option<String>,
}

/// Failure classes that map onto exit codes.
#[derive(Debug)]
enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Runtime(e.into())
    }
}

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Usage(e.into())
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Sprites(a) => commands::sprites(a),
        Command::Augment(a) => commands::augment(a),
        Command::Run(a) => commands::run(a),
        Command::Ablate(a) => commands::ablate(a),
        Command::Eval(a) => eval::eval(a),
        Command::ServeNode(a) => commands::serve_node(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("occlane: usage error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("occlane: error: {e:#}");
            ExitCode::from(1)
        }
    }
}
