//! Browser demo: one synthetic city, one trajectory at a time. The page
//! drives three operations (pick a trajectory, calibrate with a radius,
//! match under a budget) and draws the returned RGBA overlay.

use pixmatch::evalkit::score;
use pixmatch::pipeline::{run_pipeline, MaskSourceSpec, PipelineRun, RunConfig};
use pixmatch::render::{compose, path_layer, Layers, RgbImage};
use pixmatch::roadnet::RoadNetwork;
use pixmatch::trajgen::{grid_network, synthesize, GridSpec, SynthConfig, SyntheticDataset, TowerLayout};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

const MAX_SIDE: usize = 40;
const TRAJECTORIES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum View {
    Raster,
    Mask,
    Matched,
}

#[wasm_bindgen]
pub struct Demo {
    net: RoadNetwork,
    data: SyntheticDataset,
    cfg: RunConfig,
    current: usize,
    run: PipelineRun,
    view: View,
}

#[wasm_bindgen]
impl Demo {
    /// Street grid of `side`×`side` nodes with scattered towers.
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u64, side: usize, noise_sigma_m: f64) -> Result<Demo, String> {
        let side = side.clamp(6, MAX_SIDE);
        let net = grid_network(&GridSpec { rows: side, cols: side, ..GridSpec::default() }, seed);
        let synth = SynthConfig {
            count: TRAJECTORIES,
            noise_sigma_m: noise_sigma_m.max(0.0),
            towers: TowerLayout::Scatter { spacing_m: 250.0 },
            seed,
            ..SynthConfig::default()
        };
        let data = synthesize(&net, &synth).map_err(|e| e.to_string())?;
        let cfg = RunConfig { noise_sigma_m: synth.noise_sigma_m, seed, timing: false, ..RunConfig::default() };
        let run = run_pipeline(&net, &data.trajectories[0], &cfg, MaskSourceSpec::Deterministic);
        Ok(Demo { net, data, cfg, current: 0, run, view: View::Raster })
    }

    pub fn width(&self) -> u32 {
        self.cfg.width
    }

    pub fn count(&self) -> usize {
        self.data.trajectories.len()
    }

    /// Pick a trajectory and show its raster over the road raster.
    pub fn select(&mut self, index: usize) -> String {
        self.current = index.min(self.count() - 1);
        self.view = View::Raster;
        self.rerun()
    }

    /// Recompute the calibration mask with a fixed radius in pixels.
    pub fn calibrate(&mut self, radius_px: u32) -> String {
        self.cfg.radius_px = Some(radius_px);
        self.view = View::Mask;
        self.rerun()
    }

    /// Match with a budget of `cost_fraction` of the trajectory length,
    /// doubled up to `relax` times.
    pub fn match_path(&mut self, cost_fraction: f64, relax: u32) -> String {
        self.cfg.cost_fraction = cost_fraction.max(0.0);
        self.cfg.relax = relax.min(pixmatch::pipeline::MAX_RELAX);
        self.view = View::Matched;
        self.rerun()
    }

    /// The current overlay as `width²` RGBA pixels, north row first.
    pub fn rgba(&self) -> Vec<u8> {
        self.image().to_rgba()
    }
}

impl Demo {
    fn rerun(&mut self) -> String {
        self.run = run_pipeline(&self.net, &self.data.trajectories[self.current], &self.cfg, MaskSourceSpec::Deterministic);
        self.summary().to_string()
    }

    fn image(&self) -> RgbImage {
        let run = &self.run;
        let path = match (&run.outcome, &run.roads) {
            (Ok((p, _)), Some(roads)) if self.view == View::Matched => Some(path_layer(&p.edges, &self.net, &roads.grid)),
            _ => None,
        };
        let layers = Layers {
            road: run.roads.as_ref().map(|r| &r.grid),
            mask: run.mask.as_ref().filter(|_| self.view != View::Raster).map(|m| &m.grid),
            path: path.as_ref(),
            trajectory: run.trajectory.as_ref().map(|t| &t.grid),
        };
        compose(self.cfg.width, layers)
    }

    fn summary(&self) -> Value {
        let run = &self.run;
        let traj = &self.data.trajectories[self.current];
        let mut out = json!({
            "traj_id": run.traj_id,
            "points": traj.len(),
            "road_cells": run.roads.as_ref().map(|r| r.grid.count_nonzero()),
            "radius_px": run.georef.map(|g| self.cfg.radius_for(&g)),
        });
        if self.view != View::Raster {
            out["mask_cells"] = json!(run.mask.as_ref().map(|m| m.grid.count_nonzero()));
            out["candidates"] = json!(run.candidates.as_ref().map(|c| c.len()));
        }
        if self.view == View::Matched {
            let result = run.result(&self.net);
            out["status"] = json!(result.status.name());
            out["budget_m"] = json!(run.budget_m);
            if let Ok((p, used)) = &run.outcome {
                out["edges"] = json!(p.edges.len());
                out["cost_m"] = json!(p.cost_m());
                out["length_m"] = json!(p.length_m());
                out["budget_used_m"] = json!(used);
            }
            if let Ok(row) = score(&result, &self.data.ground_truth[self.current], &self.net, None) {
                out["precision"] = json!(row.precision);
                out["recall"] = json!(row.recall);
            }
        }
        out
    }
}
