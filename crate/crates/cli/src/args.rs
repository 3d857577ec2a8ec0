use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "pixmatch", version, about = "Map matching of cellular trajectories through a shared pixel space")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate towers, trajectories and ground-truth paths.
    Synth(SynthArgs),
    /// Write trajectory and road rasters (PGM + georef sidecar) per trajectory.
    Rasterize(RasterizeArgs),
    /// Write calibration masks per trajectory.
    Calibrate(CommonArgs),
    /// Match trajectories to road sequences (matches.jsonl).
    Match(CommonArgs),
    /// Score matches against ground truth, or benchmark the full pipeline.
    Eval(EvalArgs),
    /// Draw PPM overlays of roads, mask, matched path and trajectory.
    Render(RenderArgs),
}

#[derive(Args, Debug, Clone, Default)]
pub struct NetworkArgs {
    /// Node table (`node_id,lon,lat`).
    #[arg(long)]
    pub nodes: Option<PathBuf>,
    /// Edge table (`edge_id,from_node,to_node,length_m`).
    #[arg(long)]
    pub edges: Option<PathBuf>,
}

/// Pipeline settings. Unset flags fall back to `--config`, then defaults.
#[derive(Args, Debug, Clone, Default)]
pub struct Tuning {
    /// Start from a saved run_config.json.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Grid width in pixels.
    #[arg(long)]
    pub width: Option<u32>,
    /// Window buffer around the trajectory, meters.
    #[arg(long)]
    pub buffer_m: Option<f64>,
    /// Fixed calibration radius in pixels.
    #[arg(long)]
    pub radius_px: Option<u32>,
    /// Positioning noise in meters (tower selection in synth, radius policy elsewhere).
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    /// Cost budget as a fraction of trajectory length.
    #[arg(long)]
    pub cost_fraction: Option<f64>,
    /// Double the budget up to this many times when no path fits.
    #[arg(long)]
    pub relax: Option<u32>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Read calibration masks from `<dir>/<traj_id>.mask.pgm` instead of computing them.
    #[arg(long)]
    pub mask_dir: Option<PathBuf>,
    /// Write zero runtimes so reruns are byte-identical.
    #[arg(long)]
    pub no_timing: bool,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Args, Debug, Clone)]
pub struct CommonArgs {
    #[command(flatten)]
    pub net: NetworkArgs,
    /// trajectories.jsonl
    #[arg(long)]
    pub trajs: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub tuning: Tuning,
}

#[derive(Args, Debug, Clone)]
pub struct RasterizeArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// ground_truth.jsonl; also writes a gt_path raster per trajectory.
    #[arg(long)]
    pub gt: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct SynthArgs {
    #[command(flatten)]
    pub net: NetworkArgs,
    /// Generate a jittered two-way street grid `ROWSxCOLS` instead of reading a network.
    #[arg(long, value_name = "ROWSxCOLS")]
    pub grid: Option<String>,
    #[arg(long, default_value_t = 150.0)]
    pub grid_spacing_m: f64,
    #[arg(long, default_value_t = 20.0)]
    pub grid_jitter_m: f64,
    /// Use these towers (`tower_id,lon,lat`) instead of generating them.
    #[arg(long)]
    pub towers: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    pub count: usize,
    #[arg(long, default_value_t = 1500.0)]
    pub min_length_m: f64,
    #[arg(long, default_value_t = 10.0)]
    pub speed_mps: f64,
    #[arg(long, default_value_t = 12.0)]
    pub interval_s: f64,
    /// Mean spacing of scattered towers.
    #[arg(long, default_value_t = 250.0)]
    pub tower_spacing_m: f64,
    /// Put a tower at every sampled position (perfect information).
    #[arg(long, conflicts_with_all = ["towers", "tower_spacing_m"])]
    pub towers_on_path: bool,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub tuning: Tuning,
}

#[derive(Args, Debug, Clone)]
pub struct EvalArgs {
    #[command(flatten)]
    pub net: NetworkArgs,
    /// ground_truth.jsonl
    #[arg(long)]
    pub gt: PathBuf,
    /// Score this matches.jsonl. Without it, runs the pipeline on `--trajs`.
    #[arg(long, conflicts_with = "trajs")]
    pub matches: Option<PathBuf>,
    #[arg(long, required_unless_present = "matches")]
    pub trajs: Option<PathBuf>,
    /// Output directory for report.csv and report.json.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub tuning: Tuning,
}

#[derive(Args, Debug, Clone)]
pub struct RenderArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Draw matched paths from this matches.jsonl.
    #[arg(long)]
    pub matches: Option<PathBuf>,
    /// Only render these trajectories.
    #[arg(long = "traj-id")]
    pub traj_ids: Vec<String>,
}
