//! Segment-level precision/recall against ground truth, runtime
//! aggregates, and report formatting.
//!
//! Scores compare edge *sets*: an edge repeated in a path counts once.
//! Aggregates are reported both length-weighted (sum of correct length
//! over sum of matched or ground-truth length) and as plain per-trajectory
//! means.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::pathfind::{MatchResult, MatchStatus};
use crate::pipeline::{run_pipeline, MaskSourceSpec, RunConfig, StageTimes};
use crate::roadnet::{um_to_meters, NetworkError, RoadNetwork};
use crate::trajgen::{CellularTrajectory, GroundTruthPath};

/// Column order of `report.csv`.
pub const CSV_COLUMNS: [&str; 13] = [
    "traj_id",
    "status",
    "precision",
    "recall",
    "matched_length_m",
    "gt_length_m",
    "correct_length_m",
    "cost_m",
    "expanded_labels",
    "rasterize_s",
    "calibrate_s",
    "match_s",
    "total_s",
];

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("ground truth for {0} is empty")]
    EmptyGroundTruth(String),
    #[error("matched path for {0} is empty")]
    EmptyOutput(String),
    #[error("no ground truth for trajectory {0}")]
    MissingGroundTruth(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

/// Correct, output and ground-truth lengths in µm over distinct edges.
pub fn overlap_um(output: &[usize], gt: &[usize], net: &RoadNetwork) -> (u64, u64, u64) {
    let out: HashSet<usize> = output.iter().copied().collect();
    let truth: HashSet<usize> = gt.iter().copied().collect();
    let len = |s: &mut dyn Iterator<Item = &usize>| s.map(|&e| net.edge(e).length_um()).sum::<u64>();
    (len(&mut out.intersection(&truth)), len(&mut out.iter()), len(&mut truth.iter()))
}

/// (precision, recall) of an output edge list against ground truth.
pub fn precision_recall(output: &[usize], gt: &[usize], net: &RoadNetwork) -> Result<(f64, f64), EvalError> {
    if gt.is_empty() {
        return Err(EvalError::EmptyGroundTruth(String::new()));
    }
    if output.is_empty() {
        return Err(EvalError::EmptyOutput(String::new()));
    }
    let (correct, out, truth) = overlap_um(output, gt, net);
    Ok((correct as f64 / out as f64, correct as f64 / truth as f64))
}

/// One trajectory's row in the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub traj_id: String,
    pub status: MatchStatus,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub matched_length_m: Option<f64>,
    pub gt_length_m: Option<f64>,
    pub correct_length_m: Option<f64>,
    pub cost_m: Option<f64>,
    pub expanded_labels: u64,
    pub stages: Option<StageTimes>,
    pub runtime_s: f64,
}

/// Score one match record. A failed match yields a row without metrics.
pub fn score(result: &MatchResult, gt: &GroundTruthPath, net: &RoadNetwork, stages: Option<StageTimes>) -> Result<EvalRow, EvalError> {
    let truth = net.resolve_edges(&gt.edges)?;
    if truth.is_empty() {
        return Err(EvalError::EmptyGroundTruth(gt.traj_id.clone()));
    }
    let mut row = EvalRow {
        traj_id: result.traj_id.clone(),
        status: result.status,
        precision: None,
        recall: None,
        matched_length_m: None,
        gt_length_m: None,
        correct_length_m: None,
        cost_m: None,
        expanded_labels: result.expanded_labels,
        stages,
        runtime_s: result.runtime_s,
    };
    if result.status != MatchStatus::Ok {
        return Ok(row);
    }
    let output = net.resolve_edges(&result.edges)?;
    if output.is_empty() {
        return Err(EvalError::EmptyOutput(result.traj_id.clone()));
    }
    let (correct, out, truth) = overlap_um(&output, &truth, net);
    row.precision = Some(correct as f64 / out as f64);
    row.recall = Some(correct as f64 / truth as f64);
    row.matched_length_m = Some(um_to_meters(out));
    row.gt_length_m = Some(um_to_meters(truth));
    row.correct_length_m = Some(um_to_meters(correct));
    row.cost_m = Some(result.cost_m);
    Ok(row)
}

/// Mean and 95th percentile (nearest rank) of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeStats {
    pub mean_s: f64,
    pub p95_s: f64,
}

impl TimeStats {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let rank = ((0.95 * v.len() as f64).ceil() as usize).max(1);
        Some(Self { mean_s: v.iter().sum::<f64>() / v.len() as f64, p95_s: v[rank - 1] })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub trajectories: usize,
    pub matched: usize,
    /// Count of rows per non-ok status.
    pub failures: BTreeMap<String, usize>,
    pub precision_length_weighted: Option<f64>,
    pub recall_length_weighted: Option<f64>,
    pub precision_macro: Option<f64>,
    pub recall_macro: Option<f64>,
    pub runtime: Option<TimeStats>,
    pub rasterize: Option<TimeStats>,
    pub calibrate: Option<TimeStats>,
    pub matching: Option<TimeStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub aggregates: Aggregates,
}

impl EvalReport {
    pub fn from_rows(rows: Vec<EvalRow>) -> Self {
        let scored: Vec<&EvalRow> = rows.iter().filter(|r| r.precision.is_some()).collect();
        let mut failures = BTreeMap::new();
        for r in rows.iter().filter(|r| r.status != MatchStatus::Ok) {
            *failures.entry(r.status.name().to_string()).or_insert(0) += 1;
        }
        let sum = |f: fn(&EvalRow) -> Option<f64>| scored.iter().filter_map(|r| f(r)).sum::<f64>();
        let ratio = |num: f64, den: f64| (!scored.is_empty() && den > 0.0).then(|| num / den);
        let mean = |f: fn(&EvalRow) -> Option<f64>| (!scored.is_empty()).then(|| sum(f) / scored.len() as f64);
        let correct = sum(|r| r.correct_length_m);
        let stage = |f: fn(&StageTimes) -> f64| TimeStats::of(&rows.iter().filter_map(|r| r.stages.as_ref().map(f)).collect::<Vec<_>>());
        let aggregates = Aggregates {
            trajectories: rows.len(),
            matched: scored.len(),
            failures,
            precision_length_weighted: ratio(correct, sum(|r| r.matched_length_m)),
            recall_length_weighted: ratio(correct, sum(|r| r.gt_length_m)),
            precision_macro: mean(|r| r.precision),
            recall_macro: mean(|r| r.recall),
            runtime: TimeStats::of(&rows.iter().map(|r| r.runtime_s).collect::<Vec<_>>()),
            rasterize: stage(|s| s.rasterize_s),
            calibrate: stage(|s| s.calibrate_s),
            matching: stage(|s| s.match_s),
        };
        Self { rows, aggregates }
    }
}

/// Score stored match records against ground truth, in match order.
pub fn evaluate(matches: &[MatchResult], gts: &[GroundTruthPath], net: &RoadNetwork) -> Result<EvalReport, EvalError> {
    let by_id: HashMap<&str, &GroundTruthPath> = gts.iter().map(|g| (g.traj_id.as_str(), g)).collect();
    let rows = matches
        .iter()
        .map(|m| {
            let gt = by_id.get(m.traj_id.as_str()).ok_or_else(|| EvalError::MissingGroundTruth(m.traj_id.clone()))?;
            score(m, gt, net, None)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EvalReport::from_rows(rows))
}

/// Run the full pipeline on every trajectory and score it. Per-trajectory
/// failures become failure counts; only malformed ground truth aborts.
pub fn benchmark(
    net: &RoadNetwork,
    trajs: &[CellularTrajectory],
    gts: &[GroundTruthPath],
    cfg: &RunConfig,
    masks: MaskSourceSpec<'_>,
) -> Result<EvalReport, EvalError> {
    let by_id: HashMap<&str, &GroundTruthPath> = gts.iter().map(|g| (g.traj_id.as_str(), g)).collect();
    let mut rows = Vec::with_capacity(trajs.len());
    for traj in trajs {
        let gt = by_id.get(traj.traj_id()).ok_or_else(|| EvalError::MissingGroundTruth(traj.traj_id().to_string()))?;
        let run = run_pipeline(net, traj, cfg, masks);
        rows.push(score(&run.result(net), gt, net, Some(run.stages))?);
    }
    Ok(EvalReport::from_rows(rows))
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `report.csv` contents: header plus one row per trajectory.
pub fn to_csv(report: &EvalReport) -> String {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(CSV_COLUMNS).expect("in-memory write");
    for r in &report.rows {
        let s = r.stages;
        w.write_record([
            r.traj_id.clone(),
            r.status.name().to_string(),
            cell(r.precision),
            cell(r.recall),
            cell(r.matched_length_m),
            cell(r.gt_length_m),
            cell(r.correct_length_m),
            cell(r.cost_m),
            r.expanded_labels.to_string(),
            cell(s.map(|s| s.rasterize_s)),
            cell(s.map(|s| s.calibrate_s)),
            cell(s.map(|s| s.match_s)),
            r.runtime_s.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

/// Human-readable aggregate table.
pub fn to_text(report: &EvalReport) -> String {
    let a = &report.aggregates;
    let f = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into());
    let t = |v: &Option<TimeStats>| v.map(|s| format!("mean {:.6} s  p95 {:.6} s", s.mean_s, s.p95_s)).unwrap_or_else(|| "-".into());
    let mut out = String::new();
    out += &format!("trajectories                {}\n", a.trajectories);
    out += &format!("matched                     {}\n", a.matched);
    for (k, v) in &a.failures {
        out += &format!("{:<28}{v}\n", format!("failed {k}"));
    }
    out += &format!("precision (length-weighted) {}\n", f(a.precision_length_weighted));
    out += &format!("recall    (length-weighted) {}\n", f(a.recall_length_weighted));
    out += &format!("precision (macro)           {}\n", f(a.precision_macro));
    out += &format!("recall    (macro)           {}\n", f(a.recall_macro));
    out += &format!("runtime                     {}\n", t(&a.runtime));
    out += &format!("  rasterize                 {}\n", t(&a.rasterize));
    out += &format!("  calibrate                 {}\n", t(&a.calibrate));
    out += &format!("  match                     {}\n", t(&a.matching));
    out
}
