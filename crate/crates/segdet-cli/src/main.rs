//! `segdet`: command-line front end for the fusion engine.
//!
//! One binary, eight subcommands: `tile`, `stitch`, `arch-check`,
//! `simulate`, `run`, `evaluate`, `compare` and `end-to-end`. Every stage
//! failure exits nonzero with a message naming the stage.

mod commands;
mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "segdet",
    version,
    about = "Concurrent segmentation + detection fusion for aircraft recognition",
    propagate_version = true
)]
struct Cli {
    /// Config file (TOML); defaults to $SEGDET_CONFIG when set.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cut an image raster into overlapping tiles.
    Tile(TileArgs),
    /// Reassemble per-tile prediction maps into one raster.
    Stitch(StitchArgs),
    /// Validate architecture descriptors and print shape traces.
    ArchCheck(ArchCheckArgs),
    /// Generate a synthetic scene with ground truth and backend outputs.
    Simulate(SimulateArgs),
    /// Run the fusion pipeline on a scene with file backends.
    Run(RunArgs),
    /// Score a detection list against scene ground truth.
    Evaluate(EvaluateArgs),
    /// Compare evaluation reports and flag the dominant system.
    Compare(CompareArgs),
    /// simulate + run + evaluate + compare in one invocation.
    EndToEnd(EndToEndArgs),
}

#[derive(Args)]
struct TileArgs {
    /// Input raster (PMAP).
    #[arg(long)]
    image: PathBuf,
    /// Output directory for `<x>_<y>.pmap` tiles.
    #[arg(long)]
    out_dir: PathBuf,
    /// Tile edge length in pixels.
    #[arg(long, default_value_t = 512)]
    tile_size: u32,
    /// Overlap between neighboring tiles in pixels.
    #[arg(long, default_value_t = 128)]
    overlap: u32,
}

#[derive(Args)]
struct StitchArgs {
    /// Directory of `<x>_<y>.pmap` tiles.
    #[arg(long)]
    tiles_dir: PathBuf,
    /// Output canvas width in pixels.
    #[arg(long)]
    width: u32,
    /// Output canvas height in pixels.
    #[arg(long)]
    height: u32,
    /// Output raster path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ArchCheckArgs {
    /// Architecture descriptor file (TOML); built-in defaults when omitted.
    #[arg(long)]
    file: Option<PathBuf>,
    /// Image size for anchor arithmetic.
    #[arg(long, default_value_t = 512)]
    image_size: u32,
}

#[derive(Args)]
struct SimulateArgs {
    /// Output scene directory.
    #[arg(long)]
    out: PathBuf,
    /// Master seed; all randomness derives from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Scenario preset: noiseless or calibrated.
    #[arg(long, default_value = "noiseless")]
    preset: String,
    /// Full simulation config (TOML, `SimulationConfig`); overrides the
    /// preset entirely except for the seed flag.
    #[arg(long)]
    sim_config: Option<PathBuf>,
    /// Override the aircraft count of the preset.
    #[arg(long)]
    aircraft: Option<u32>,
    /// Taxonomy document; embedded default when omitted.
    #[arg(long)]
    taxonomy: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// Scene manifest (scene.toml).
    #[arg(long)]
    scene: PathBuf,
    /// Segmentation backend directory (expects `tiles/`); may come from
    /// the config file instead.
    #[arg(long)]
    seg_backend: Option<PathBuf>,
    /// Detection backend directory (expects `dets/`); may come from the
    /// config file instead.
    #[arg(long)]
    det_backend: Option<PathBuf>,
    /// Output directory for detections, residual map and trace.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    pipeline: PipelineFlags,
    /// Taxonomy document; embedded default when omitted.
    #[arg(long)]
    taxonomy: Option<PathBuf>,
}

#[derive(Args, Default)]
struct PipelineFlags {
    /// Operating mode preset: balanced, recall or precision.
    #[arg(long)]
    mode: Option<String>,
    /// Segmentation prediction threshold override.
    #[arg(long)]
    seg_threshold: Option<f64>,
    /// Minimum region size override (pixels).
    #[arg(long)]
    seg_min_size: Option<usize>,
    /// Detection score threshold override.
    #[arg(long)]
    det_threshold: Option<f64>,
    /// Minimum detection box area override (square pixels).
    #[arg(long)]
    det_min_size: Option<f64>,
    /// Remainder recovery: on or off.
    #[arg(long)]
    recovery: Option<String>,
    /// Tile edge length in pixels.
    #[arg(long)]
    tile_size: Option<u32>,
    /// Tile overlap in pixels.
    #[arg(long)]
    overlap: Option<u32>,
    /// Maximum detect-erase iterations.
    #[arg(long)]
    max_iter: Option<u32>,
}

impl PipelineFlags {
    fn overrides(&self) -> anyhow::Result<config::PipelineOverrides> {
        let recovery = match self.recovery.as_deref() {
            None => None,
            Some("on") => Some(true),
            Some("off") => Some(false),
            Some(other) => anyhow::bail!("--recovery takes on or off, got `{other}`"),
        };
        Ok(config::PipelineOverrides {
            mode: self.mode.clone(),
            seg_threshold: self.seg_threshold,
            seg_min_size: self.seg_min_size,
            det_threshold: self.det_threshold,
            det_min_size: self.det_min_size,
            recovery,
            tile_size: self.tile_size,
            overlap: self.overlap,
            max_iter: self.max_iter,
        })
    }
}

#[derive(Args)]
struct EvaluateArgs {
    /// Scene manifest with ground truth.
    #[arg(long)]
    scene: PathBuf,
    /// Detection list file to score.
    #[arg(long)]
    detections: PathBuf,
    /// Overlap criterion: over-target or iou.
    #[arg(long)]
    criterion: Option<String>,
    /// Hierarchy level emphasized in the printed report.
    #[arg(long, default_value_t = 3)]
    level: u8,
    /// Machine-readable report output path (JSON).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Taxonomy document; embedded default when omitted.
    #[arg(long)]
    taxonomy: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// Labeled reports: NAME=REPORT.json (at least two).
    #[arg(required = true, num_args = 2..)]
    boards: Vec<String>,
    /// Machine-readable comparison output path (JSON).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EndToEndArgs {
    /// Output directory for the scene, run artifacts and reports.
    #[arg(long)]
    out: PathBuf,
    /// Master seed; all randomness derives from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Scenario preset: noiseless or calibrated.
    #[arg(long, default_value = "calibrated")]
    preset: String,
    /// Full simulation config (TOML); overrides the preset.
    #[arg(long)]
    sim_config: Option<PathBuf>,
    /// Overlap criterion: over-target or iou.
    #[arg(long)]
    criterion: Option<String>,
    #[command(flatten)]
    pipeline: PipelineFlags,
    /// Taxonomy document; embedded default when omitted.
    #[arg(long)]
    taxonomy: Option<PathBuf>,
}

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Tile(args) => commands::tile(args),
        Command::Stitch(args) => commands::stitch(args),
        Command::ArchCheck(args) => commands::arch_check(args),
        Command::Simulate(args) => commands::simulate(&cli, args),
        Command::Run(args) => commands::run(&cli, args),
        Command::Evaluate(args) => commands::evaluate(&cli, args),
        Command::Compare(args) => commands::compare(args),
        Command::EndToEnd(args) => commands::end_to_end(&cli, args),
    };
    match result {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            std::process::exit(1);
        }
    }
}
