//! One trajectory through rasterize → calibrate → match, with stage timing.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::calibrate::{calibrate_deterministic, default_radius, external_mask, load_external_mask, CalibError, CalibrationMask};
use crate::io::grid_path;
use crate::pathfind::{
    candidate_set_among, search_with_relax, select_endpoints, CandidateSet, FoundPath, MatchResult, MatchStatus, SearchError,
    SearchOptions,
};
use crate::raster::{make_georef, rasterize_roads, rasterize_trajectory, sidecar_path, Channel, Georef, PixelGrid, RasterError, RoadRaster, TrajectoryRaster, DEFAULT_WIDTH, MIN_WIDTH};
use crate::roadnet::RoadNetwork;
use crate::trajgen::{trajectory_length, CellularTrajectory, GridSpec, SynthConfig};

/// Most budget doublings `relax` may request.
pub const MAX_RELAX: u32 = 4;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("width {0} is below the minimum of {MIN_WIDTH}")]
    Width(u32),
    #[error("{0} must be a non-negative finite number, got {1}")]
    NonNegative(&'static str, f64),
    #[error("radius must be at least 1 pixel")]
    Radius,
    #[error("relax may double the budget at most {MAX_RELAX} times, got {0}")]
    Relax(u32),
}

/// Everything that determines a run's outputs. Serialized next to every
/// output as `run_config.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub width: u32,
    pub buffer_m: f64,
    /// Fixed calibration radius; `None` derives it from `noise_sigma_m`.
    pub radius_px: Option<u32>,
    pub noise_sigma_m: f64,
    /// Cost budget as a fraction of trajectory length.
    pub cost_fraction: f64,
    pub relax: u32,
    pub seed: u64,
    /// Record wall-clock runtimes. Off makes every output byte-identical
    /// across reruns.
    pub timing: bool,
    /// Directory of externally produced masks; switches the calibrator.
    pub mask_dir: Option<PathBuf>,
    /// Subcommand that wrote this config.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<String>,
    /// Input and output paths of that command.
    pub paths: BTreeMap<String, String>,
    /// Dataset synthesis settings, for configs written by `synth`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthConfig>,
    /// Generated street grid, when the network was synthesized too.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            width: DEFAULT_WIDTH,
            buffer_m: 500.0,
            radius_px: None,
            noise_sigma_m: 0.0,
            cost_fraction: 0.03,
            relax: 0,
            seed: 42,
            timing: true,
            mask_dir: None,
            command: None,
            paths: BTreeMap::new(),
            synth: None,
            grid: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.width < MIN_WIDTH {
            return Err(ConfigError::Width(self.width));
        }
        for (name, v) in [("buffer_m", self.buffer_m), ("noise_sigma_m", self.noise_sigma_m), ("cost_fraction", self.cost_fraction)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(ConfigError::NonNegative(name, v));
            }
        }
        if self.radius_px == Some(0) {
            return Err(ConfigError::Radius);
        }
        if self.relax > MAX_RELAX {
            return Err(ConfigError::Relax(self.relax));
        }
        Ok(())
    }

    /// Radius used for a window with georef `g`.
    pub fn radius_for(&self, g: &Georef) -> u32 {
        self.radius_px.unwrap_or_else(|| default_radius(self.noise_sigma_m, g))
    }
}

/// Monotonic clock with checkpoints. Reads zero where no clock exists.
#[derive(Debug, Clone, Copy)]
pub struct Stopwatch {
    #[cfg(not(target_arch = "wasm32"))]
    start: std::time::Instant,
    last: f64,
}

impl Stopwatch {
    pub fn start() -> Self {
        Self {
            #[cfg(not(target_arch = "wasm32"))]
            start: std::time::Instant::now(),
            last: 0.0,
        }
    }

    /// Seconds since `start`.
    pub fn elapsed(&self) -> f64 {
        #[cfg(not(target_arch = "wasm32"))]
        {
            self.start.elapsed().as_secs_f64()
        }
        #[cfg(target_arch = "wasm32")]
        {
            0.0
        }
    }

    /// Seconds from `start` to the most recent lap.
    pub fn checkpoint(&self) -> f64 {
        self.last
    }

    /// Seconds since the previous lap.
    pub fn lap(&mut self) -> f64 {
        let now = self.elapsed();
        let d = now - self.last;
        self.last = now;
        d
    }
}

/// Per-stage wall-clock seconds. Stages are contiguous laps of one clock,
/// so they add up to `total_s`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimes {
    pub rasterize_s: f64,
    pub calibrate_s: f64,
    pub match_s: f64,
    pub total_s: f64,
}

impl StageTimes {
    pub fn zeroed(self) -> Self {
        Self::default()
    }
}

/// Where calibration masks come from.
#[derive(Debug, Clone, Copy)]
pub enum MaskSourceSpec<'a> {
    /// Radius policy of the run config.
    Deterministic,
    /// `<dir>/<traj_id>.mask.pgm` plus sidecar.
    Directory(&'a Path),
    /// A mask already in memory, clipped to road cells like a file mask.
    Grid(&'a PixelGrid),
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Calibrate(#[from] CalibError),
    #[error(transparent)]
    Search(#[from] SearchError),
}

impl PipelineError {
    pub fn status(&self) -> MatchStatus {
        match self {
            PipelineError::Raster(_) => MatchStatus::RasterFailed,
            PipelineError::Calibrate(_) | PipelineError::Search(SearchError::EmptyCandidateSet) => MatchStatus::CalibrationFailed,
            PipelineError::Search(SearchError::NoFeasiblePath { .. }) => MatchStatus::NoFeasiblePath,
            PipelineError::Search(SearchError::Unreachable { .. }) => MatchStatus::Unreachable,
            PipelineError::Search(_) => MatchStatus::Failed,
        }
    }
}

/// Intermediate products of one run, kept for rendering and inspection.
#[derive(Debug)]
pub struct PipelineRun {
    pub traj_id: String,
    pub georef: Option<Georef>,
    pub trajectory: Option<TrajectoryRaster>,
    pub roads: Option<RoadRaster>,
    pub mask: Option<CalibrationMask>,
    pub candidates: Option<CandidateSet>,
    pub endpoints: Option<(usize, usize)>,
    /// Initial cost budget in meters.
    pub budget_m: f64,
    /// Path and the budget it was found under (after any relaxation).
    pub outcome: Result<(FoundPath, f64), PipelineError>,
    pub stages: StageTimes,
}

impl PipelineRun {
    /// The `matches.jsonl` record of this run.
    pub fn result(&self, net: &RoadNetwork) -> MatchResult {
        let runtime = self.stages.total_s;
        match &self.outcome {
            Ok((p, _)) => MatchResult::found(&self.traj_id, net, p, runtime),
            Err(e) => MatchResult::failed(&self.traj_id, e.status(), runtime),
        }
    }
}

/// Run the whole pipeline on one trajectory.
pub fn run_pipeline(net: &RoadNetwork, traj: &CellularTrajectory, cfg: &RunConfig, masks: MaskSourceSpec<'_>) -> PipelineRun {
    let mut clock = Stopwatch::start();
    let mut run = PipelineRun {
        traj_id: traj.traj_id().to_string(),
        georef: None,
        trajectory: None,
        roads: None,
        mask: None,
        candidates: None,
        endpoints: None,
        budget_m: cfg.cost_fraction * trajectory_length(traj),
        outcome: Err(PipelineError::Search(SearchError::EmptyCandidateSet)),
        stages: StageTimes::default(),
    };
    let outcome = stages(net, traj, cfg, masks, &mut run, &mut clock);
    // a stage that failed early still closes its lap
    let rest = clock.lap();
    if run.mask.is_none() && run.roads.is_some() {
        run.stages.calibrate_s += rest;
    } else if run.roads.is_none() {
        run.stages.rasterize_s += rest;
    } else {
        run.stages.match_s += rest;
    }
    run.stages.total_s = clock.checkpoint();
    if !cfg.timing {
        run.stages = run.stages.zeroed();
    }
    run.outcome = outcome;
    run
}

fn stages(
    net: &RoadNetwork,
    traj: &CellularTrajectory,
    cfg: &RunConfig,
    masks: MaskSourceSpec<'_>,
    run: &mut PipelineRun,
    clock: &mut Stopwatch,
) -> Result<(FoundPath, f64), PipelineError> {
    let g = make_georef(traj, cfg.buffer_m, cfg.width)?;
    run.georef = Some(g);
    let traj_raster = rasterize_trajectory(traj, &g)?;
    let roads = rasterize_roads(net, &g);
    run.trajectory = Some(traj_raster);
    run.roads = Some(roads);
    run.stages.rasterize_s = clock.lap();

    let (traj_raster, roads) = (run.trajectory.as_ref().expect("set"), run.roads.as_ref().expect("set"));
    let mask = match masks {
        MaskSourceSpec::Deterministic => calibrate_deterministic(&traj_raster.grid, &roads.grid, cfg.radius_for(&g))?,
        MaskSourceSpec::Directory(dir) => {
            let p = grid_path(dir, traj.traj_id(), Channel::Mask);
            load_external_mask(&p, &sidecar_path(&p), &roads.grid)?
        }
        MaskSourceSpec::Grid(grid) => external_mask(grid.clone().with_channel(Channel::Mask), &roads.grid)?,
    };
    run.mask = Some(mask);
    run.stages.calibrate_s = clock.lap();

    let (mask, roads) = (run.mask.as_ref().expect("set"), run.roads.as_ref().expect("set"));
    let set = candidate_set_among(&mask.grid, net, roads.edges.iter().copied())?;
    let (start, end) = select_endpoints(&set, traj, net)?;
    run.endpoints = Some((start, end));
    let found = search_with_relax(net, &set, start, end, run.budget_m, cfg.relax, SearchOptions::default());
    run.candidates = Some(set);
    let found = found?;
    run.stages.match_s = clock.lap();
    Ok(found)
}

/// Convenience wrapper returning only the `matches.jsonl` record.
pub fn match_trajectory(net: &RoadNetwork, traj: &CellularTrajectory, cfg: &RunConfig, masks: MaskSourceSpec<'_>) -> (MatchResult, StageTimes) {
    let run = run_pipeline(net, traj, cfg, masks);
    (run.result(net), run.stages)
}
