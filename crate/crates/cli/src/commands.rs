use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Display;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use pixmatch::calibrate::{calibrate_deterministic, external_mask, CalibrationMask, MaskSource};
use pixmatch::evalkit::{evaluate, score, to_csv, to_text, EvalReport};
use pixmatch::io::{grid_path, read_json, read_jsonl, read_towers, write_json, write_jsonl, write_network, write_towers};
use pixmatch::pathfind::{MatchResult, MatchStatus};
use pixmatch::pipeline::{run_pipeline, MaskSourceSpec, RunConfig};
use pixmatch::raster::{
    make_georef, rasterize_path, rasterize_roads, rasterize_trajectory, read_grid_with_sidecar, sidecar_path, write_grid, Channel,
    PixelGrid,
};
use pixmatch::render::{compose, Layers};
use pixmatch::roadnet::{load_network, RoadNetwork};
use pixmatch::trajgen::{grid_network, synthesize, synthesize_with_towers, CellularTrajectory, GridSpec, GroundTruthPath, SynthConfig, TowerLayout};

use crate::args::{CommonArgs, EvalArgs, NetworkArgs, RasterizeArgs, RenderArgs, SynthArgs, Tuning};

/// Error that stops the whole command (exit code 2).
#[derive(Debug)]
pub struct Fatal {
    pub kind: &'static str,
    pub message: String,
}

impl Fatal {
    pub fn new(kind: &'static str, e: impl Display) -> Self {
        Self { kind, message: e.to_string() }
    }
}

#[derive(Serialize)]
struct ErrorObject<'a> {
    error: &'a str,
    message: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    traj_id: Option<&'a str>,
}

pub fn emit_fatal(f: &Fatal) {
    eprintln!("{}", serde_json::to_string(&ErrorObject { error: f.kind, message: &f.message, traj_id: None }).expect("serializable"));
}

fn emit_item(traj_id: &str, kind: &str, message: impl Display) {
    let message = message.to_string();
    eprintln!("{}", serde_json::to_string(&ErrorObject { error: kind, message: &message, traj_id: Some(traj_id) }).expect("serializable"));
}

/// Report a per-trajectory failure; always `false` for `fine` flags.
fn fail(traj_id: &str, kind: &str, message: impl Display) -> bool {
    emit_item(traj_id, kind, message);
    false
}

/// `Ok(true)` when some trajectories failed.
pub type Outcome = Result<bool, Fatal>;

fn config(t: &Tuning) -> Result<RunConfig, Fatal> {
    let mut c: RunConfig = match &t.config {
        Some(p) => read_json(p).map_err(|e| Fatal::new("config", e))?,
        None => RunConfig::default(),
    };
    macro_rules! take {
        ($($field:ident <- $flag:ident),*) => {$(if let Some(v) = t.$flag.clone() { c.$field = v; })*};
    }
    take!(width <- width, buffer_m <- buffer_m, noise_sigma_m <- noise_sigma, cost_fraction <- cost_fraction, relax <- relax, seed <- seed);
    if t.radius_px.is_some() {
        c.radius_px = t.radius_px;
    }
    if t.mask_dir.is_some() {
        c.mask_dir = t.mask_dir.clone();
    }
    if t.no_timing {
        c.timing = false;
    }
    c.validate().map_err(|e| Fatal::new("config", e))?;
    Ok(c)
}

fn record(c: &mut RunConfig, command: &str, paths: &[(&str, Option<&Path>)]) {
    c.command = Some(command.to_string());
    c.paths = paths.iter().filter_map(|(k, p)| p.map(|p| (k.to_string(), p.display().to_string()))).collect::<BTreeMap<_, _>>();
}

fn prepare_out(out: &Path, cfg: &RunConfig) -> Result<(), Fatal> {
    std::fs::create_dir_all(out).map_err(|e| Fatal::new("io", format!("{}: {e}", out.display())))?;
    write_json(&out.join("run_config.json"), cfg).map_err(|e| Fatal::new("io", e))
}

fn load_net(n: &NetworkArgs) -> Result<RoadNetwork, Fatal> {
    match (&n.nodes, &n.edges) {
        (Some(nodes), Some(edges)) => load_network(nodes, edges).map_err(|e| Fatal::new("network", e)),
        _ => Err(Fatal::new("usage", "--nodes and --edges are required")),
    }
}

fn load_trajs(path: &Path) -> Result<Vec<CellularTrajectory>, Fatal> {
    let trajs: Vec<CellularTrajectory> = read_jsonl(path).map_err(|e| Fatal::new("trajectories", e))?;
    let mut seen = HashSet::new();
    for t in &trajs {
        if !seen.insert(t.traj_id()) {
            return Err(Fatal::new("trajectories", format!("duplicate traj_id {}", t.traj_id())));
        }
    }
    Ok(trajs)
}

fn load_gt(path: &Path) -> Result<Vec<GroundTruthPath>, Fatal> {
    read_jsonl(path).map_err(|e| Fatal::new("ground_truth", e))
}

fn pool(jobs: Option<usize>) -> Result<rayon::ThreadPool, Fatal> {
    rayon::ThreadPoolBuilder::new().num_threads(jobs.unwrap_or(0)).build().map_err(|e| Fatal::new("threads", e))
}

fn mask_source(cfg: &RunConfig) -> MaskSourceSpec<'_> {
    match &cfg.mask_dir {
        Some(dir) => MaskSourceSpec::Directory(dir),
        None => MaskSourceSpec::Deterministic,
    }
}

fn parse_grid(s: &str) -> Result<(usize, usize), Fatal> {
    let bad = || Fatal::new("usage", format!("--grid expects ROWSxCOLS, got {s:?}"));
    let (r, c) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    let (r, c) = (r.trim().parse().map_err(|_| bad())?, c.trim().parse().map_err(|_| bad())?);
    if r < 2 || c < 2 {
        return Err(bad());
    }
    Ok((r, c))
}

pub fn synth(a: &SynthArgs) -> Outcome {
    let mut cfg = config(&a.tuning)?;
    let net = match &a.grid {
        Some(g) => {
            if a.net.nodes.is_some() || a.net.edges.is_some() {
                return Err(Fatal::new("usage", "--grid conflicts with --nodes/--edges"));
            }
            let (rows, cols) = parse_grid(g)?;
            let spec = GridSpec { rows, cols, spacing_m: a.grid_spacing_m, jitter_m: a.grid_jitter_m, ..Default::default() };
            cfg.grid = Some(spec);
            grid_network(&spec, cfg.seed)
        }
        None => load_net(&a.net)?,
    };
    let layout = if a.towers_on_path { TowerLayout::OnPath } else { TowerLayout::Scatter { spacing_m: a.tower_spacing_m } };
    let sc = SynthConfig {
        count: a.count,
        min_length_m: a.min_length_m,
        speed_mps: a.speed_mps,
        interval_s: a.interval_s,
        noise_sigma_m: cfg.noise_sigma_m,
        towers: layout,
        seed: cfg.seed,
    };
    let data = match &a.towers {
        Some(p) => synthesize_with_towers(&net, &sc, read_towers(p).map_err(|e| Fatal::new("towers", e))?),
        None => synthesize(&net, &sc),
    }
    .map_err(|e| Fatal::new("synth", e))?;
    cfg.synth = Some(sc);
    record(&mut cfg, "synth", &[("nodes", a.net.nodes.as_deref()), ("edges", a.net.edges.as_deref()), ("towers", a.towers.as_deref()), ("out", Some(&a.out))]);
    prepare_out(&a.out, &cfg)?;
    let io = |e| Fatal::new("io", e);
    if a.grid.is_some() {
        write_network(&net, &a.out.join("nodes.csv"), &a.out.join("edges.csv")).map_err(io)?;
    }
    write_towers(&a.out.join("towers.csv"), &data.towers).map_err(io)?;
    write_jsonl(&a.out.join("trajectories.jsonl"), &data.trajectories).map_err(io)?;
    write_jsonl(&a.out.join("ground_truth.jsonl"), &data.ground_truth).map_err(io)?;
    Ok(false)
}

struct Inputs {
    cfg: RunConfig,
    net: RoadNetwork,
    trajs: Vec<CellularTrajectory>,
    pool: rayon::ThreadPool,
}

fn inputs(c: &CommonArgs, command: &str, extra: &[(&str, Option<&Path>)]) -> Result<Inputs, Fatal> {
    let mut cfg = config(&c.tuning)?;
    let net = load_net(&c.net)?;
    let trajs = load_trajs(&c.trajs)?;
    let mut paths = vec![("nodes", c.net.nodes.as_deref()), ("edges", c.net.edges.as_deref()), ("trajs", Some(c.trajs.as_path())), ("out", Some(c.out.as_path()))];
    paths.extend_from_slice(extra);
    record(&mut cfg, command, &paths);
    prepare_out(&c.out, &cfg)?;
    Ok(Inputs { cfg, net, trajs, pool: pool(c.tuning.jobs)? })
}

fn write_or_report(grid: &PixelGrid, path: &Path, traj_id: &str) -> bool {
    match write_grid(grid, path) {
        Ok(()) => true,
        Err(e) => {
            emit_item(traj_id, "io", e);
            false
        }
    }
}

pub fn rasterize(a: &RasterizeArgs) -> Outcome {
    let c = &a.common;
    let inp = inputs(c, "rasterize", &[("gt", a.gt.as_deref())])?;
    let gts: HashMap<String, GroundTruthPath> = match &a.gt {
        Some(p) => load_gt(p)?.into_iter().map(|g| (g.traj_id.clone(), g)).collect(),
        None => HashMap::new(),
    };
    let (cfg, net) = (&inp.cfg, &inp.net);
    let ok: Vec<bool> = inp.pool.install(|| {
        inp.trajs
            .par_iter()
            .map(|t| {
                let id = t.traj_id();
                let g = match make_georef(t, cfg.buffer_m, cfg.width) {
                    Ok(g) => g,
                    Err(e) => return fail(id, "raster", e),
                };
                let traj = match rasterize_trajectory(t, &g) {
                    Ok(r) => r.grid,
                    Err(e) => return fail(id, "raster", e),
                };
                let mut roads = rasterize_roads(net, &g).grid;
                roads.traj_id = id.to_string();
                let mut fine = write_or_report(&traj, &grid_path(&c.out, id, Channel::Trajectory), id)
                    && write_or_report(&roads, &grid_path(&c.out, id, Channel::Road), id);
                if a.gt.is_some() {
                    match gts.get(id).map(|gt| gt.resolve(net)) {
                        Some(Ok(path)) => {
                            let mut grid = rasterize_path(&path, net, &g);
                            grid.traj_id = id.to_string();
                            fine &= write_or_report(&grid, &grid_path(&c.out, id, Channel::GtPath), id);
                        }
                        Some(Err(e)) => {
                            emit_item(id, "ground_truth", e);
                            fine = false;
                        }
                        None => {
                            emit_item(id, "ground_truth", "no ground truth for this trajectory");
                            fine = false;
                        }
                    }
                }
                fine
            })
            .collect()
    });
    Ok(ok.contains(&false))
}

#[derive(Serialize)]
struct CalibrationRecord {
    traj_id: String,
    source: Option<MaskSource>,
    radius_px: Option<u32>,
    cells: usize,
    dropped: usize,
    status: &'static str,
}

fn calibrate_one(net: &RoadNetwork, t: &CellularTrajectory, cfg: &RunConfig) -> Result<(CalibrationMask, Option<u32>), (String, &'static str)> {
    let raster = |e: &dyn Display| (e.to_string(), "raster");
    let g = make_georef(t, cfg.buffer_m, cfg.width).map_err(|e| raster(&e))?;
    let traj = rasterize_trajectory(t, &g).map_err(|e| raster(&e))?;
    let roads = rasterize_roads(net, &g);
    let calib = |e: &dyn Display| (e.to_string(), "calibration");
    match mask_source(cfg) {
        MaskSourceSpec::Directory(dir) => {
            let p = grid_path(dir, t.traj_id(), Channel::Mask);
            let grid = read_grid_with_sidecar(&p, &sidecar_path(&p)).map_err(|e| calib(&e))?;
            Ok((external_mask(grid, &roads.grid).map_err(|e| calib(&e))?, None))
        }
        _ => {
            let r = cfg.radius_for(&g);
            Ok((calibrate_deterministic(&traj.grid, &roads.grid, r).map_err(|e| calib(&e))?, Some(r)))
        }
    }
}

pub fn calibrate(c: &CommonArgs) -> Outcome {
    let inp = inputs(c, "calibrate", &[("mask_dir", c.tuning.mask_dir.as_deref())])?;
    let (cfg, net) = (&inp.cfg, &inp.net);
    let records: Vec<CalibrationRecord> = inp.pool.install(|| {
        inp.trajs
            .par_iter()
            .map(|t| {
                let id = t.traj_id().to_string();
                match calibrate_one(net, t, cfg) {
                    Ok((mut mask, radius)) => {
                        mask.grid.traj_id = id.clone();
                        let ok = write_or_report(&mask.grid, &grid_path(&c.out, &id, Channel::Mask), &id);
                        CalibrationRecord {
                            cells: mask.grid.count_nonzero(),
                            dropped: mask.dropped,
                            source: Some(mask.source),
                            radius_px: radius,
                            status: if ok { "ok" } else { "io_failed" },
                            traj_id: id,
                        }
                    }
                    Err((msg, kind)) => {
                        emit_item(&id, kind, &msg);
                        CalibrationRecord { traj_id: id, source: None, radius_px: None, cells: 0, dropped: 0, status: "calibration_failed" }
                    }
                }
            })
            .collect()
    });
    write_jsonl(&c.out.join("calibration.jsonl"), &records).map_err(|e| Fatal::new("io", e))?;
    Ok(records.iter().any(|r| r.status != "ok"))
}

fn run_all(inp: &Inputs) -> Vec<(MatchResult, pixmatch::pipeline::StageTimes)> {
    let masks = mask_source(&inp.cfg);
    inp.pool.install(|| {
        inp.trajs
            .par_iter()
            .map(|t| {
                let run = run_pipeline(&inp.net, t, &inp.cfg, masks);
                if let Err(e) = &run.outcome {
                    emit_item(t.traj_id(), run.result(&inp.net).status.name(), e);
                }
                (run.result(&inp.net), run.stages)
            })
            .collect()
    })
}

pub fn match_cmd(c: &CommonArgs) -> Outcome {
    let inp = inputs(c, "match", &[("mask_dir", c.tuning.mask_dir.as_deref())])?;
    let results: Vec<MatchResult> = run_all(&inp).into_iter().map(|(r, _)| r).collect();
    write_jsonl(&c.out.join("matches.jsonl"), &results).map_err(|e| Fatal::new("io", e))?;
    Ok(results.iter().any(|r| r.status != MatchStatus::Ok))
}

fn write_report(out: &Path, report: &EvalReport) -> Result<(), Fatal> {
    std::fs::write(out.join("report.csv"), to_csv(report)).map_err(|e| Fatal::new("io", e))?;
    write_json(&out.join("report.json"), report).map_err(|e| Fatal::new("io", e))?;
    print!("{}", to_text(report));
    Ok(())
}

pub fn eval(a: &EvalArgs) -> Outcome {
    let gts = load_gt(&a.gt)?;
    if let Some(m) = &a.matches {
        let mut cfg = config(&a.tuning)?;
        let net = load_net(&a.net)?;
        let matches: Vec<MatchResult> = read_jsonl(m).map_err(|e| Fatal::new("matches", e))?;
        record(
            &mut cfg,
            "eval",
            &[("nodes", a.net.nodes.as_deref()), ("edges", a.net.edges.as_deref()), ("gt", Some(&a.gt)), ("matches", Some(m)), ("out", Some(&a.out))],
        );
        prepare_out(&a.out, &cfg)?;
        let report = evaluate(&matches, &gts, &net).map_err(|e| Fatal::new("eval", e))?;
        write_report(&a.out, &report)?;
        return Ok(false);
    }
    let trajs = a.trajs.clone().ok_or_else(|| Fatal::new("usage", "--trajs or --matches is required"))?;
    let common = CommonArgs { net: a.net.clone(), trajs, out: a.out.clone(), tuning: a.tuning.clone() };
    let inp = inputs(&common, "eval", &[("gt", Some(&a.gt)), ("mask_dir", a.tuning.mask_dir.as_deref())])?;
    let by_id: HashMap<&str, &GroundTruthPath> = gts.iter().map(|g| (g.traj_id.as_str(), g)).collect();
    if let Some(t) = inp.trajs.iter().find(|t| !by_id.contains_key(t.traj_id())) {
        return Err(Fatal::new("eval", format!("no ground truth for trajectory {}", t.traj_id())));
    }
    let rows = run_all(&inp)
        .into_iter()
        .map(|(r, stages)| score(&r, by_id[r.traj_id.as_str()], &inp.net, Some(stages)))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| Fatal::new("eval", e))?;
    let report = EvalReport::from_rows(rows);
    write_report(&a.out, &report)?;
    Ok(report.aggregates.matched < report.aggregates.trajectories)
}

pub fn render(a: &RenderArgs) -> Outcome {
    let c = &a.common;
    let mut inp = inputs(c, "render", &[("matches", a.matches.as_deref()), ("mask_dir", c.tuning.mask_dir.as_deref())])?;
    if !a.traj_ids.is_empty() {
        let wanted: HashSet<&str> = a.traj_ids.iter().map(String::as_str).collect();
        inp.trajs.retain(|t| wanted.contains(t.traj_id()));
        if inp.trajs.len() != wanted.len() {
            return Err(Fatal::new("usage", "some --traj-id values are not in --trajs"));
        }
    }
    let matches: HashMap<String, MatchResult> = match &a.matches {
        Some(p) => read_jsonl::<MatchResult>(p).map_err(|e| Fatal::new("matches", e))?.into_iter().map(|m| (m.traj_id.clone(), m)).collect(),
        None => HashMap::new(),
    };
    let (cfg, net) = (&inp.cfg, &inp.net);
    let ok: Vec<bool> = inp.pool.install(|| {
        inp.trajs
            .par_iter()
            .map(|t| {
                let id = t.traj_id();
                let prepared = make_georef(t, cfg.buffer_m, cfg.width).and_then(|g| Ok((g, rasterize_trajectory(t, &g)?)));
                let (g, traj) = match prepared {
                    Ok(v) => v,
                    Err(e) => return fail(id, "raster", e),
                };
                let roads = rasterize_roads(net, &g).grid;
                let mut fine = true;
                let mask = match &cfg.mask_dir {
                    Some(dir) => {
                        let p = grid_path(dir, id, Channel::Mask);
                        match read_grid_with_sidecar(&p, &sidecar_path(&p)) {
                            // drawn as stored, clipped to road cells, even when empty
                            Ok(m) if m.georef.matches(&g, pixmatch::calibrate::GEOREF_TOLERANCE) => {
                                let mut clipped = PixelGrid::zeros(g, Channel::Mask);
                                for idx in m.nonzero_indices().filter(|&i| roads.values()[i] > 0.0) {
                                    clipped.set_index(idx, 1.0);
                                }
                                Some(clipped)
                            }
                            Ok(_) => {
                                emit_item(id, "calibration", "mask georef does not match the trajectory window");
                                fine = false;
                                None
                            }
                            Err(e) => {
                                emit_item(id, "calibration", e);
                                fine = false;
                                None
                            }
                        }
                    }
                    None => match calibrate_deterministic(&traj.grid, &roads, cfg.radius_for(&g)) {
                        Ok(m) => Some(m.grid),
                        Err(e) => {
                            emit_item(id, "calibration", e);
                            fine = false;
                            None
                        }
                    },
                };
                let path = matches.get(id).filter(|m| m.status == MatchStatus::Ok).and_then(|m| match net.resolve_edges(&m.edges) {
                    Ok(p) => Some(rasterize_path(&p, net, &g)),
                    Err(e) => {
                        emit_item(id, "matches", e);
                        fine = false;
                        None
                    }
                });
                let img = compose(g.width, Layers { road: Some(&roads), mask: mask.as_ref(), path: path.as_ref(), trajectory: Some(&traj.grid) });
                let out: PathBuf = c.out.join(format!("{}.ppm", pixmatch::io::file_stem(id)));
                if let Err(e) = std::fs::write(&out, img.encode_ppm()) {
                    emit_item(id, "io", format!("{}: {e}", out.display()));
                    fine = false;
                }
                fine
            })
            .collect()
    });
    Ok(ok.contains(&false))
}
