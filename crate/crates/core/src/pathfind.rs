//! Candidate road sets and the cost-constrained label-setting path search.
//!
//! A path's *deviation cost* is the total length of its edges outside the
//! candidate set. The search returns, among connected paths from the start
//! edge to the end edge whose cost stays within a budget, the one with the
//! lowest cost, then the shortest length, then the lexicographically
//! smallest edge sequence (edge indices follow the canonical id order).
//!
//! Labels are popped in ascending (cost, length). Each edge keeps a Pareto
//! frontier of labels; a label is discarded when another label at the same
//! edge is no worse in cost and length (and, on an exact tie, not
//! lexicographically larger). All arithmetic is in integer micrometers.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::raster::PixelGrid;
use crate::roadnet::{haversine, meters_to_um, um_to_meters, RoadNetwork};
use crate::trajgen::CellularTrajectory;

/// Default upper bound on labels created by one search.
pub const DEFAULT_MAX_LABELS: usize = 5_000_000;

/// Default depth of the exhaustive reference search.
pub const DEFAULT_BRUTE_DEPTH: usize = 14;

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum SearchError {
    #[error("no path within cost budget {budget_m:.3} m (best achievable {min_achievable_cost_m:.3} m)")]
    NoFeasiblePath { budget_m: f64, min_achievable_cost_m: f64 },
    #[error("edge {end} is unreachable from edge {start}")]
    Unreachable { start: String, end: String },
    #[error("candidate road set is empty")]
    EmptyCandidateSet,
    #[error("path is disconnected between {0} and {1}")]
    Disconnected(String, String),
    #[error("unknown edge {0}")]
    UnknownEdge(String),
    #[error("cost budget must be a non-negative number, got {0}")]
    InvalidBudget(f64),
    #[error("search exceeded {0} labels")]
    LabelLimit(usize),
}

impl SearchError {
    /// Stable machine-readable name.
    pub fn kind(&self) -> &'static str {
        match self {
            SearchError::NoFeasiblePath { .. } => "no_feasible_path",
            SearchError::Unreachable { .. } => "unreachable",
            SearchError::EmptyCandidateSet => "empty_candidate_set",
            SearchError::Disconnected(..) => "disconnected",
            SearchError::UnknownEdge(_) => "unknown_edge",
            SearchError::InvalidBudget(_) => "invalid_budget",
            SearchError::LabelLimit(_) => "label_limit",
        }
    }
}

/// Road segments whose both endpoint cells are set in a mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateSet {
    member: Vec<bool>,
    edges: Vec<usize>,
}

impl CandidateSet {
    pub fn from_edges(net: &RoadNetwork, edges: impl IntoIterator<Item = usize>) -> Self {
        let mut member = vec![false; net.edge_count()];
        for e in edges {
            member[e] = true;
        }
        let edges = member.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i).collect();
        Self { member, edges }
    }

    pub fn contains(&self, edge: usize) -> bool {
        self.member[edge]
    }

    /// Member edges, ascending.
    pub fn edges(&self) -> &[usize] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Deviation of one edge in µm: 0 inside the set, its length outside.
    pub fn deviation_um(&self, net: &RoadNetwork, edge: usize) -> u64 {
        if self.member[edge] {
            0
        } else {
            net.edge(edge).length_um()
        }
    }
}

/// Edges whose tail and head both fall on set cells of `mask`.
pub fn candidate_set(mask: &PixelGrid, net: &RoadNetwork) -> Result<CandidateSet, SearchError> {
    candidate_set_among(mask, net, 0..net.edge_count())
}

/// [`candidate_set`] restricted to a pre-filtered list of edges, such as
/// the in-window edges of a road raster.
pub fn candidate_set_among(mask: &PixelGrid, net: &RoadNetwork, edges: impl IntoIterator<Item = usize>) -> Result<CandidateSet, SearchError> {
    let g = &mask.georef;
    let on_mask = |p| {
        let (c, r) = g.to_pixel(p);
        mask.is_set(c, r)
    };
    let set = CandidateSet::from_edges(net, edges.into_iter().filter(|&e| on_mask(net.from_pos(e)) && on_mask(net.to_pos(e))));
    if set.is_empty() {
        return Err(SearchError::EmptyCandidateSet);
    }
    Ok(set)
}

/// Deviation cost of a connected path, in µm.
pub fn deviation_cost_um(path: &[usize], set: &CandidateSet, net: &RoadNetwork) -> Result<u64, SearchError> {
    if let Some(w) = path.windows(2).find(|w| net.edge(w[0]).to != net.edge(w[1]).from) {
        return Err(SearchError::Disconnected(net.edge(w[0]).id.clone(), net.edge(w[1]).id.clone()));
    }
    Ok(path.iter().map(|&e| set.deviation_um(net, e)).sum())
}

/// Deviation cost of a connected path, in meters.
pub fn deviation_cost(path: &[usize], set: &CandidateSet, net: &RoadNetwork) -> Result<f64, SearchError> {
    deviation_cost_um(path, set, net).map(um_to_meters)
}

/// Start edge: the candidate whose tail is nearest the first trajectory
/// point. End edge: the candidate whose head is nearest the last point.
/// Distance ties go to the smaller edge.
pub fn select_endpoints(set: &CandidateSet, traj: &CellularTrajectory, net: &RoadNetwork) -> Result<(usize, usize), SearchError> {
    let nearest = |point, tail: bool| {
        set.edges()
            .iter()
            .map(|&e| (haversine(if tail { net.from_pos(e) } else { net.to_pos(e) }, point), e))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
            .map(|(_, e)| e)
    };
    let start = nearest(traj.first(), true).ok_or(SearchError::EmptyCandidateSet)?;
    let end = nearest(traj.last(), false).ok_or(SearchError::EmptyCandidateSet)?;
    Ok((start, end))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchOptions {
    /// Per-edge dominance pruning. When off, every budget-feasible label
    /// that repeats no edge is kept.
    pub prune: bool,
    pub max_labels: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self { prune: true, max_labels: DEFAULT_MAX_LABELS }
    }
}

/// A path found by a search, with exact integer totals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoundPath {
    pub edges: Vec<usize>,
    pub cost_um: u64,
    pub length_um: u64,
    /// Labels popped (search) or sequences enumerated (brute force).
    pub expanded_labels: u64,
}

impl FoundPath {
    pub fn cost_m(&self) -> f64 {
        um_to_meters(self.cost_um)
    }

    pub fn length_m(&self) -> f64 {
        um_to_meters(self.length_um)
    }
}

fn budget_um(budget_m: f64) -> Result<u64, SearchError> {
    if !(budget_m >= 0.0 && budget_m.is_finite()) {
        return Err(SearchError::InvalidBudget(budget_m));
    }
    Ok((budget_m * 1e6).floor() as u64)
}

const NO_PARENT: u32 = u32::MAX;

struct Label {
    edge: u32,
    parent: u32,
    cost: u64,
    length: u64,
    alive: bool,
}

struct Arena {
    labels: Vec<Label>,
}

impl Arena {
    fn sequence(&self, mut id: u32) -> Vec<usize> {
        let mut seq = Vec::new();
        while id != NO_PARENT {
            seq.push(self.labels[id as usize].edge as usize);
            id = self.labels[id as usize].parent;
        }
        seq.reverse();
        seq
    }

    fn uses(&self, mut id: u32, edge: usize) -> bool {
        while id != NO_PARENT {
            if self.labels[id as usize].edge as usize == edge {
                return true;
            }
            id = self.labels[id as usize].parent;
        }
        false
    }

    /// Total order used for both dominance ties and the final choice.
    fn cmp(&self, a: u32, b: u32) -> Ordering {
        let (la, lb) = (&self.labels[a as usize], &self.labels[b as usize]);
        (la.cost, la.length).cmp(&(lb.cost, lb.length)).then_with(|| self.sequence(a).cmp(&self.sequence(b)))
    }

    /// `a` dominates `b` (same edge assumed).
    fn dominates(&self, a: u32, b: u32) -> bool {
        let (la, lb) = (&self.labels[a as usize], &self.labels[b as usize]);
        if la.cost > lb.cost || la.length > lb.length {
            return false;
        }
        if la.cost < lb.cost || la.length < lb.length {
            return true;
        }
        self.sequence(a) <= self.sequence(b)
    }
}

/// Label-setting search for the best path from `start` to `end` with
/// deviation cost at most `budget_m`.
pub fn constrained_search(
    net: &RoadNetwork,
    set: &CandidateSet,
    start: usize,
    end: usize,
    budget_m: f64,
    opts: SearchOptions,
) -> Result<FoundPath, SearchError> {
    let budget = budget_um(budget_m)?;
    for e in [start, end] {
        if e >= net.edge_count() {
            return Err(SearchError::UnknownEdge(e.to_string()));
        }
    }
    let mut arena = Arena { labels: Vec::new() };
    let mut frontier: Vec<Vec<u32>> = if opts.prune { vec![Vec::new(); net.edge_count()] } else { Vec::new() };
    let mut heap: BinaryHeap<Reverse<(u64, u64, u32)>> = BinaryHeap::new();
    let mut best: Option<u32> = None;
    let mut expanded = 0u64;

    let c0 = set.deviation_um(net, start);
    if c0 <= budget {
        arena.labels.push(Label { edge: start as u32, parent: NO_PARENT, cost: c0, length: net.edge(start).length_um(), alive: true });
        if opts.prune {
            frontier[start].push(0);
        }
        heap.push(Reverse((c0, arena.labels[0].length, 0)));
    }

    while let Some(Reverse((cost, length, id))) = heap.pop() {
        if !arena.labels[id as usize].alive {
            continue;
        }
        if let Some(b) = best {
            let bl = &arena.labels[b as usize];
            if (cost, length) > (bl.cost, bl.length) {
                break;
            }
        }
        expanded += 1;
        let edge = arena.labels[id as usize].edge as usize;
        if edge == end {
            if best.is_none_or(|b| arena.cmp(id, b) == Ordering::Less) {
                best = Some(id);
            }
            continue;
        }
        for &next in net.successor_indices(edge) {
            let nc = cost + set.deviation_um(net, next);
            let nl = length + net.edge(next).length_um();
            // cutting the loop out of a path that repeats an edge gives a
            // strictly shorter one at no extra cost, so no optimum repeats
            if nc > budget || (!opts.prune && arena.uses(id, next)) {
                continue;
            }
            if let Some(b) = best {
                let bl = &arena.labels[b as usize];
                if (nc, nl) > (bl.cost, bl.length) {
                    continue;
                }
            }
            if arena.labels.len() >= opts.max_labels {
                return Err(SearchError::LabelLimit(opts.max_labels));
            }
            let nid = arena.labels.len() as u32;
            arena.labels.push(Label { edge: next as u32, parent: id, cost: nc, length: nl, alive: true });
            if opts.prune {
                if frontier[next].iter().any(|&x| arena.dominates(x, nid)) {
                    arena.labels.pop();
                    continue;
                }
                let mut kept = Vec::with_capacity(frontier[next].len() + 1);
                for &x in &frontier[next] {
                    if arena.dominates(nid, x) {
                        arena.labels[x as usize].alive = false;
                    } else {
                        kept.push(x);
                    }
                }
                kept.push(nid);
                frontier[next] = kept;
            }
            heap.push(Reverse((nc, nl, nid)));
        }
    }

    match best {
        Some(b) => {
            let l = &arena.labels[b as usize];
            Ok(FoundPath { edges: arena.sequence(b), cost_um: l.cost, length_um: l.length, expanded_labels: expanded })
        }
        None => Err(infeasible(net, set, start, end, budget_m)),
    }
}

/// Budget-free minimum deviation cost from `start` to `end` (Dijkstra on
/// deviation weights) turned into the matching error.
fn infeasible(net: &RoadNetwork, set: &CandidateSet, start: usize, end: usize, budget_m: f64) -> SearchError {
    let mut dist = vec![u64::MAX; net.edge_count()];
    let mut heap = BinaryHeap::new();
    dist[start] = set.deviation_um(net, start);
    heap.push(Reverse((dist[start], start)));
    while let Some(Reverse((d, e))) = heap.pop() {
        if d > dist[e] {
            continue;
        }
        if e == end {
            return SearchError::NoFeasiblePath { budget_m, min_achievable_cost_m: um_to_meters(d) };
        }
        for &s in net.successor_indices(e) {
            let nd = d + set.deviation_um(net, s);
            if nd < dist[s] {
                dist[s] = nd;
                heap.push(Reverse((nd, s)));
            }
        }
    }
    SearchError::Unreachable { start: net.edge(start).id.clone(), end: net.edge(end).id.clone() }
}

/// Exhaustive reference search: a depth-first walk over every edge
/// sequence from `start` that repeats no edge and has at most `max_depth`
/// edges, applying the same objective and tie-breaks. Repeating an edge
/// always leaves a cheaper-or-equal, strictly shorter path, so nothing
/// optimal is missed once `max_depth` reaches the edge count. Branches are
/// cut only where no extension can reach `end`, exceed the budget, or beat
/// the incumbent, since cost and length never decrease along a walk.
pub fn brute_force_search(
    net: &RoadNetwork,
    set: &CandidateSet,
    start: usize,
    end: usize,
    budget_m: f64,
    max_depth: usize,
) -> Result<FoundPath, SearchError> {
    let budget = budget_um(budget_m)?;
    // edges with some walk to `end`
    let mut reaches = vec![false; net.edge_count()];
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); net.edge_count()];
    for e in 0..net.edge_count() {
        for &s in net.successor_indices(e) {
            preds[s].push(e);
        }
    }
    let mut stack = vec![end];
    reaches[end] = true;
    while let Some(e) = stack.pop() {
        for &p in &preds[e] {
            if !reaches[p] {
                reaches[p] = true;
                stack.push(p);
            }
        }
    }
    if !reaches[start] {
        return Err(SearchError::Unreachable { start: net.edge(start).id.clone(), end: net.edge(end).id.clone() });
    }

    struct Walk<'a> {
        net: &'a RoadNetwork,
        set: &'a CandidateSet,
        reaches: &'a [bool],
        end: usize,
        /// Only bound on cost; looking for the cheapest arrival.
        cost_only: bool,
        limit: u64,
        max_depth: usize,
        used: Vec<bool>,
        seq: Vec<usize>,
        best: Option<(u64, u64, Vec<usize>)>,
        enumerated: u64,
    }
    impl Walk<'_> {
        fn beaten(&self, cost: u64, length: u64) -> bool {
            match &self.best {
                None => cost > self.limit,
                Some(b) if self.cost_only => cost >= b.0,
                Some(b) => (cost, length) > (b.0, b.1),
            }
        }

        fn visit(&mut self, cost: u64, length: u64) {
            self.enumerated += 1;
            let edge = *self.seq.last().expect("non-empty");
            if edge == self.end {
                // sequences come in lexicographic order, so only a strictly
                // better (cost, length) replaces the incumbent
                let better = match &self.best {
                    None => true,
                    Some(b) if self.cost_only => cost < b.0,
                    Some(b) => (cost, length) < (b.0, b.1),
                };
                if better {
                    self.best = Some((cost, length, self.seq.clone()));
                }
                return;
            }
            if self.seq.len() == self.max_depth {
                return;
            }
            for &next in self.net.successor_indices(edge) {
                if self.used[next] || !self.reaches[next] {
                    continue;
                }
                let nc = cost + self.set.deviation_um(self.net, next);
                let nl = length + self.net.edge(next).length_um();
                if self.beaten(nc, nl) {
                    continue;
                }
                self.used[next] = true;
                self.seq.push(next);
                self.visit(nc, nl);
                self.seq.pop();
                self.used[next] = false;
            }
        }
    }
    let walk = |cost_only: bool, limit: u64| {
        let mut w = Walk {
            net,
            set,
            reaches: &reaches,
            end,
            cost_only,
            limit,
            max_depth: max_depth.max(1),
            used: vec![false; net.edge_count()],
            seq: vec![start],
            best: None,
            enumerated: 0,
        };
        w.used[start] = true;
        let (c0, l0) = (set.deviation_um(net, start), net.edge(start).length_um());
        if !w.beaten(c0, l0) {
            w.visit(c0, l0);
        }
        (w.best, w.enumerated)
    };
    match walk(false, budget) {
        (Some((cost_um, length_um, edges)), enumerated) => Ok(FoundPath { edges, cost_um, length_um, expanded_labels: enumerated }),
        (None, _) => match walk(true, u64::MAX) {
            (Some((min, _, _)), _) => Err(SearchError::NoFeasiblePath { budget_m, min_achievable_cost_m: um_to_meters(min) }),
            (None, _) => Err(SearchError::Unreachable { start: net.edge(start).id.clone(), end: net.edge(end).id.clone() }),
        },
    }
}

/// Run [`constrained_search`], doubling the budget up to `relax` times
/// while no feasible path exists. Returns the path and the budget used.
pub fn search_with_relax(
    net: &RoadNetwork,
    set: &CandidateSet,
    start: usize,
    end: usize,
    budget_m: f64,
    relax: u32,
    opts: SearchOptions,
) -> Result<(FoundPath, f64), SearchError> {
    let mut budget = budget_m;
    let mut attempt = 0;
    loop {
        match constrained_search(net, set, start, end, budget, opts) {
            Ok(p) => return Ok((p, budget)),
            Err(SearchError::NoFeasiblePath { .. }) if attempt < relax => {
                attempt += 1;
                budget *= 2.0;
            }
            Err(e) => return Err(e),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchStatus {
    Ok,
    NoFeasiblePath,
    Unreachable,
    RasterFailed,
    CalibrationFailed,
    Failed,
}

impl MatchStatus {
    pub fn name(self) -> &'static str {
        match self {
            MatchStatus::Ok => "ok",
            MatchStatus::NoFeasiblePath => "no_feasible_path",
            MatchStatus::Unreachable => "unreachable",
            MatchStatus::RasterFailed => "raster_failed",
            MatchStatus::CalibrationFailed => "calibration_failed",
            MatchStatus::Failed => "failed",
        }
    }
}

/// One line of `matches.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub traj_id: String,
    pub edges: Vec<String>,
    pub cost_m: f64,
    pub length_m: f64,
    pub expanded_labels: u64,
    pub runtime_s: f64,
    pub status: MatchStatus,
}

impl MatchResult {
    pub fn found(traj_id: &str, net: &RoadNetwork, path: &FoundPath, runtime_s: f64) -> Self {
        Self {
            traj_id: traj_id.to_string(),
            edges: net.edge_ids(&path.edges),
            cost_m: path.cost_m(),
            length_m: path.length_m(),
            expanded_labels: path.expanded_labels,
            runtime_s,
            status: MatchStatus::Ok,
        }
    }

    pub fn failed(traj_id: &str, status: MatchStatus, runtime_s: f64) -> Self {
        Self { traj_id: traj_id.to_string(), edges: Vec::new(), cost_m: 0.0, length_m: 0.0, expanded_labels: 0, runtime_s, status }
    }
}

/// Meters → µm for callers comparing against [`FoundPath`] totals.
pub fn to_um(m: f64) -> u64 {
    meters_to_um(m)
}
