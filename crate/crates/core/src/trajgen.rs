//! Cellular trajectories and synthetic labeled datasets.
//!
//! Randomness comes from [`seeded_rng`]: xoshiro256++ seeded through
//! SplitMix64, so every generated artifact is reproducible from its seed on
//! any platform.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::roadnet::{haversine, meters_to_um, EdgeSpec, GeoPoint, NetworkBuilder, RoadNetwork, EARTH_RADIUS_M};

/// Maximum number of random origins tried by [`generate_path`].
pub const PATH_RETRIES: usize = 100;

/// Number of nearest towers competing for each observation.
pub const TOWER_CANDIDATES: usize = 5;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum TrajError {
    #[error("trajectory {0} has fewer than 2 samples")]
    TooFewSamples(String),
    #[error("trajectory {traj_id}: timestamp decreases at sample {index}")]
    TimeDecreasing { traj_id: String, index: usize },
    #[error("trajectory {traj_id}: sample {index} repeats tower {tower_id}")]
    DuplicateTower { traj_id: String, index: usize, tower_id: String },
    #[error("trajectory {traj_id}: sample {index} has an invalid position or time")]
    InvalidSample { traj_id: String, index: usize },
    #[error("no path of at least {min_length_m} m found after {retries} origins")]
    PathExhausted { min_length_m: f64, retries: usize },
    #[error("path has zero length")]
    DegeneratePath,
    #[error("{0} must be positive")]
    NonPositive(&'static str),
    #[error("tower set is empty")]
    NoTowers,
    #[error("duplicate tower id {0}")]
    DuplicateTowerId(String),
    #[error("unknown edge {0} in path")]
    UnknownEdge(String),
    #[error("path is disconnected between {0} and {1}")]
    Disconnected(String, String),
}

/// xoshiro256++ seeded via SplitMix64.
pub fn seeded_rng(seed: u64) -> Xoshiro256PlusPlus {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

/// SplitMix64 finalizer, used to derive independent per-item seeds.
pub fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellTowerSample {
    pub tower_id: String,
    #[serde(flatten)]
    pub pos: GeoPoint,
    pub t: f64,
}

/// Time-ordered tower observations of one trip. At least two samples, and
/// consecutive samples never share a tower.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTrajectory")]
pub struct CellularTrajectory {
    traj_id: String,
    samples: Vec<CellTowerSample>,
}

#[derive(Deserialize)]
struct RawTrajectory {
    traj_id: String,
    samples: Vec<CellTowerSample>,
}

impl TryFrom<RawTrajectory> for CellularTrajectory {
    type Error = TrajError;
    fn try_from(raw: RawTrajectory) -> Result<Self, TrajError> {
        Self::new(raw.traj_id, raw.samples)
    }
}

impl CellularTrajectory {
    pub fn new(traj_id: impl Into<String>, samples: Vec<CellTowerSample>) -> Result<Self, TrajError> {
        let traj_id = traj_id.into();
        if samples.len() < 2 {
            return Err(TrajError::TooFewSamples(traj_id));
        }
        for (index, s) in samples.iter().enumerate() {
            if !s.pos.is_valid() || !s.t.is_finite() {
                return Err(TrajError::InvalidSample { traj_id, index });
            }
            if index > 0 {
                let prev = &samples[index - 1];
                if s.t < prev.t {
                    return Err(TrajError::TimeDecreasing { traj_id, index });
                }
                if s.tower_id == prev.tower_id {
                    return Err(TrajError::DuplicateTower { traj_id, index, tower_id: s.tower_id.clone() });
                }
            }
        }
        Ok(Self { traj_id, samples })
    }

    pub fn traj_id(&self) -> &str {
        &self.traj_id
    }

    pub fn samples(&self) -> &[CellTowerSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn first(&self) -> GeoPoint {
        self.samples[0].pos
    }

    pub fn last(&self) -> GeoPoint {
        self.samples[self.samples.len() - 1].pos
    }

    pub fn reversed(&self) -> Self {
        let t_end = self.samples[self.samples.len() - 1].t;
        let samples = self
            .samples
            .iter()
            .rev()
            .map(|s| CellTowerSample { t: t_end - s.t, ..s.clone() })
            .collect();
        Self { traj_id: self.traj_id.clone(), samples }
    }
}

/// Ground-truth edge sequence of one trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthPath {
    pub traj_id: String,
    pub edges: Vec<String>,
}

impl GroundTruthPath {
    /// Resolve to edge indices, checking head-to-tail contiguity.
    pub fn resolve(&self, net: &RoadNetwork) -> Result<Vec<usize>, TrajError> {
        let idx: Vec<usize> = self
            .edges
            .iter()
            .map(|id| net.edge_idx(id).ok_or_else(|| TrajError::UnknownEdge(id.clone())))
            .collect::<Result<_, _>>()?;
        for w in idx.windows(2) {
            if net.edge(w[0]).to != net.edge(w[1]).from {
                return Err(TrajError::Disconnected(net.edge(w[0]).id.clone(), net.edge(w[1]).id.clone()));
            }
        }
        Ok(idx)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tower {
    pub tower_id: String,
    #[serde(flatten)]
    pub pos: GeoPoint,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TowerSet {
    towers: Vec<Tower>,
}

impl TowerSet {
    pub fn new(towers: Vec<Tower>) -> Result<Self, TrajError> {
        let mut seen = std::collections::HashSet::new();
        for t in &towers {
            if !seen.insert(t.tower_id.as_str()) {
                return Err(TrajError::DuplicateTowerId(t.tower_id.clone()));
            }
        }
        Ok(Self { towers })
    }

    pub fn towers(&self) -> &[Tower] {
        &self.towers
    }

    pub fn len(&self) -> usize {
        self.towers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.towers.is_empty()
    }

    /// Append towers, rejecting ids already present.
    pub fn extend(&mut self, more: Vec<Tower>) -> Result<(), TrajError> {
        let mut all = std::mem::take(&mut self.towers);
        all.extend(more);
        *self = Self::new(all)?;
        Ok(())
    }
}

/// Random on-network route of at least `min_length_m`: a random origin
/// node, a random destination among nodes at least that far away, and the
/// shortest path between them. Starting and ending at nodes keeps routes
/// free of the U-turns a forced first or last edge would introduce.
/// Retries with a new origin up to [`PATH_RETRIES`] times.
pub fn generate_path(net: &RoadNetwork, rng_seed: u64, min_length_m: f64) -> Result<Vec<usize>, TrajError> {
    let mut rng = seeded_rng(rng_seed);
    let exhausted = TrajError::PathExhausted { min_length_m, retries: PATH_RETRIES };
    let origins: Vec<usize> = (0..net.node_count()).filter(|&n| !net.out_edges(n).is_empty()).collect();
    if origins.is_empty() {
        return Err(exhausted);
    }
    let min_um = meters_to_um(min_length_m).max(1);
    for _ in 0..PATH_RETRIES {
        let origin = origins[rng.random_range(0..origins.len())];
        let (dist, via) = node_dijkstra(net, origin);
        let far: Vec<usize> = (0..net.node_count()).filter(|&n| dist[n] != u64::MAX && dist[n] >= min_um).collect();
        if far.is_empty() {
            continue;
        }
        let mut n = far[rng.random_range(0..far.len())];
        let mut path = Vec::new();
        while n != origin {
            let e = via[n];
            path.push(e);
            n = net.edge(e).from;
        }
        path.reverse();
        return Ok(path);
    }
    Err(exhausted)
}

/// Shortest node distances in µm and the edge each node is reached by.
fn node_dijkstra(net: &RoadNetwork, origin: usize) -> (Vec<u64>, Vec<usize>) {
    let mut dist = vec![u64::MAX; net.node_count()];
    let mut via = vec![usize::MAX; net.node_count()];
    let mut heap = BinaryHeap::new();
    dist[origin] = 0;
    heap.push(Reverse((0u64, origin)));
    while let Some(Reverse((d, n))) = heap.pop() {
        if d > dist[n] {
            continue;
        }
        for &e in net.out_edges(n) {
            let to = net.edge(e).to;
            let nd = d + net.edge(e).length_um();
            if nd < dist[to] {
                dist[to] = nd;
                via[to] = e;
                heap.push(Reverse((nd, to)));
            }
        }
    }
    (dist, via)
}

/// A position on the route and its time offset in seconds from the start.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimedPosition {
    pub pos: GeoPoint,
    pub t: f64,
}

/// Positions every `speed × interval` meters of arc length along the path,
/// always including both path ends.
pub fn sample_positions(
    path: &[usize],
    net: &RoadNetwork,
    speed_mps: f64,
    interval_s: f64,
) -> Result<Vec<TimedPosition>, TrajError> {
    if !(speed_mps > 0.0) {
        return Err(TrajError::NonPositive("speed"));
    }
    if !(interval_s > 0.0) {
        return Err(TrajError::NonPositive("interval"));
    }
    let total: f64 = path.iter().map(|&e| net.edge(e).length_m).sum();
    if path.is_empty() || !(total > 0.0) {
        return Err(TrajError::DegeneratePath);
    }
    let spacing = speed_mps * interval_s;
    let eps = 1e-9 * total + 1e-6;
    let mut out = Vec::new();
    let mut edge_start = 0.0;
    let mut cursor = 0;
    let mut k = 0u64;
    loop {
        let s = k as f64 * spacing;
        if s >= total - eps {
            break;
        }
        while cursor + 1 < path.len() && edge_start + net.edge(path[cursor]).length_m <= s {
            edge_start += net.edge(path[cursor]).length_m;
            cursor += 1;
        }
        let e = path[cursor];
        let frac = ((s - edge_start) / net.edge(e).length_m).clamp(0.0, 1.0);
        out.push(TimedPosition { pos: lerp(net.from_pos(e), net.to_pos(e), frac), t: s / speed_mps });
        k += 1;
    }
    out.push(TimedPosition { pos: net.to_pos(path[path.len() - 1]), t: total / speed_mps });
    Ok(out)
}

fn lerp(a: GeoPoint, b: GeoPoint, f: f64) -> GeoPoint {
    GeoPoint::new(a.lon + (b.lon - a.lon) * f, a.lat + (b.lat - a.lat) * f)
}

/// Serving-tower observations of a sequence of positions. Each position picks
/// one of its [`TOWER_CANDIDATES`] nearest towers with probability
/// ∝ exp(−d²/2σ²); σ = 0 always picks the nearest. Repeated consecutive
/// towers collapse into one sample (the first time is kept).
pub fn observe_towers(
    traj_id: &str,
    positions: &[TimedPosition],
    towers: &TowerSet,
    noise_sigma_m: f64,
    rng_seed: u64,
    t0: f64,
) -> Result<CellularTrajectory, TrajError> {
    if towers.is_empty() {
        return Err(TrajError::NoTowers);
    }
    let mut rng = seeded_rng(rng_seed);
    let mut samples: Vec<CellTowerSample> = Vec::with_capacity(positions.len());
    for p in positions {
        let tower = &towers.towers()[select_tower(p.pos, towers, noise_sigma_m, &mut rng)];
        if samples.last().is_some_and(|s| s.tower_id == tower.tower_id) {
            continue;
        }
        samples.push(CellTowerSample { tower_id: tower.tower_id.clone(), pos: tower.pos, t: t0 + p.t });
    }
    CellularTrajectory::new(traj_id, samples)
}

/// Index of the tower serving `pos`.
pub fn select_tower<R: Rng>(pos: GeoPoint, towers: &TowerSet, noise_sigma_m: f64, rng: &mut R) -> usize {
    let nearest = nearest_towers(pos, towers, TOWER_CANDIDATES);
    if noise_sigma_m <= 0.0 || nearest.len() == 1 {
        return nearest[0].0;
    }
    let weights = softmax_weights(&nearest, noise_sigma_m);
    let u: f64 = rng.random::<f64>() * weights.iter().sum::<f64>();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return nearest[i].0;
        }
    }
    nearest[nearest.len() - 1].0
}

/// Unnormalized selection weights exp(−(d² − d_min²)/2σ²).
fn softmax_weights(nearest: &[(usize, f64)], sigma: f64) -> Vec<f64> {
    let d0 = nearest[0].1;
    nearest.iter().map(|&(_, d)| (-(d * d - d0 * d0) / (2.0 * sigma * sigma)).exp()).collect()
}

/// Up to `k` towers closest to `pos`, nearest first; ties keep set order.
pub fn nearest_towers(pos: GeoPoint, towers: &TowerSet, k: usize) -> Vec<(usize, f64)> {
    let mut best: Vec<(usize, f64)> = Vec::with_capacity(k + 1);
    for (i, t) in towers.towers().iter().enumerate() {
        let d = haversine(pos, t.pos);
        if best.len() == k && d >= best[k - 1].1 {
            continue;
        }
        let at = best.partition_point(|&(_, bd)| bd <= d);
        best.insert(at, (i, d));
        best.truncate(k);
    }
    best
}

/// Sum of great-circle distances between consecutive samples.
pub fn trajectory_length(traj: &CellularTrajectory) -> f64 {
    traj.samples().windows(2).map(|w| haversine(w[0].pos, w[1].pos)).sum()
}

/// Parameters for a jittered rectangular street grid with two-way streets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    pub spacing_m: f64,
    pub jitter_m: f64,
    pub origin: GeoPoint,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { rows: 10, cols: 10, spacing_m: 150.0, jitter_m: 20.0, origin: GeoPoint::new(120.15, 30.25) }
    }
}

/// Build a grid network; node ids are `r{row}c{col}`, edge ids are
/// consecutive integers.
pub fn grid_network(spec: &GridSpec, seed: u64) -> RoadNetwork {
    let mut rng = seeded_rng(seed);
    let deg_lat = 180.0 / (std::f64::consts::PI * EARTH_RADIUS_M);
    let deg_lon = deg_lat / spec.origin.lat.to_radians().cos();
    let mut b = NetworkBuilder::new();
    let name = |r: usize, c: usize| format!("r{r}c{c}");
    for r in 0..spec.rows {
        for c in 0..spec.cols {
            let jx = (rng.random::<f64>() * 2.0 - 1.0) * spec.jitter_m;
            let jy = (rng.random::<f64>() * 2.0 - 1.0) * spec.jitter_m;
            let x = c as f64 * spec.spacing_m + jx;
            let y = r as f64 * spec.spacing_m + jy;
            b.add_node(name(r, c), GeoPoint::new(spec.origin.lon + x * deg_lon, spec.origin.lat + y * deg_lat), None);
        }
    }
    let mut next = 0usize;
    let mut link = |b: &mut NetworkBuilder, a: String, z: String| {
        b.add_edge(EdgeSpec::new(next.to_string(), a.clone(), z.clone()));
        b.add_edge(EdgeSpec::new((next + 1).to_string(), z, a));
        next += 2;
    };
    for r in 0..spec.rows {
        for c in 0..spec.cols {
            if c + 1 < spec.cols {
                link(&mut b, name(r, c), name(r, c + 1));
            }
            if r + 1 < spec.rows {
                link(&mut b, name(r, c), name(r + 1, c));
            }
        }
    }
    b.build().expect("grid construction is valid")
}

/// Tower layout for synthetic datasets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TowerLayout {
    /// Uniform random towers over the network bounding box, one per
    /// `spacing_m²` on average.
    Scatter { spacing_m: f64 },
    /// One tower at every sampled position of every trajectory.
    OnPath,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub count: usize,
    pub min_length_m: f64,
    pub speed_mps: f64,
    pub interval_s: f64,
    pub noise_sigma_m: f64,
    pub towers: TowerLayout,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            count: 50,
            min_length_m: 1500.0,
            speed_mps: 10.0,
            interval_s: 12.0,
            noise_sigma_m: 0.0,
            towers: TowerLayout::Scatter { spacing_m: 250.0 },
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub towers: TowerSet,
    pub trajectories: Vec<CellularTrajectory>,
    pub ground_truth: Vec<GroundTruthPath>,
}

/// Base timestamp for synthetic trips.
const EPOCH_BASE: f64 = 1_700_000_000.0;

/// Generate `cfg.count` labeled trajectories. Trips whose observation
/// collapses to a single tower are redrawn with the next sub-seed.
pub fn synthesize(net: &RoadNetwork, cfg: &SynthConfig) -> Result<SyntheticDataset, TrajError> {
    let towers = match cfg.towers {
        TowerLayout::Scatter { spacing_m } => scatter_towers(net, spacing_m, mix_seed(cfg.seed, 0))?,
        TowerLayout::OnPath => TowerSet::default(),
    };
    synthesize_inner(net, cfg, towers)
}

/// [`synthesize`] observing trips through a given tower set; the layout in
/// `cfg` is ignored.
pub fn synthesize_with_towers(net: &RoadNetwork, cfg: &SynthConfig, towers: TowerSet) -> Result<SyntheticDataset, TrajError> {
    if towers.is_empty() {
        return Err(TrajError::NoTowers);
    }
    let cfg = SynthConfig { towers: TowerLayout::Scatter { spacing_m: f64::NAN }, ..*cfg };
    synthesize_inner(net, &cfg, towers)
}

fn synthesize_inner(net: &RoadNetwork, cfg: &SynthConfig, mut towers: TowerSet) -> Result<SyntheticDataset, TrajError> {
    let mut trajectories = Vec::with_capacity(cfg.count);
    let mut ground_truth = Vec::with_capacity(cfg.count);
    let mut attempt = 0u64;
    while trajectories.len() < cfg.count {
        attempt += 1;
        if attempt > (cfg.count as u64 + 1) * PATH_RETRIES as u64 {
            return Err(TrajError::PathExhausted { min_length_m: cfg.min_length_m, retries: PATH_RETRIES });
        }
        let i = trajectories.len();
        let traj_id = format!("t{i:05}");
        let path = generate_path(net, mix_seed(cfg.seed, 2 * attempt + 1), cfg.min_length_m)?;
        let positions = sample_positions(&path, net, cfg.speed_mps, cfg.interval_s)?;
        let t0 = EPOCH_BASE + 3600.0 * i as f64;
        let traj = match cfg.towers {
            TowerLayout::Scatter { .. } => {
                observe_towers(&traj_id, &positions, &towers, cfg.noise_sigma_m, mix_seed(cfg.seed, 2 * attempt + 2), t0)
            }
            TowerLayout::OnPath => {
                let local = TowerSet::new(
                    positions
                        .iter()
                        .enumerate()
                        .map(|(k, p)| Tower { tower_id: format!("{traj_id}_{k}"), pos: p.pos })
                        .collect(),
                )?;
                let traj = observe_towers(&traj_id, &positions, &local, cfg.noise_sigma_m, mix_seed(cfg.seed, 2 * attempt + 2), t0);
                if traj.is_ok() {
                    towers.extend(local.towers)?;
                }
                traj
            }
        };
        match traj {
            Ok(traj) => {
                ground_truth.push(GroundTruthPath { traj_id: traj_id.clone(), edges: net.edge_ids(&path) });
                trajectories.push(traj);
            }
            Err(TrajError::TooFewSamples(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(SyntheticDataset { towers, trajectories, ground_truth })
}

/// Uniform random towers over the network bounding box.
pub fn scatter_towers(net: &RoadNetwork, spacing_m: f64, seed: u64) -> Result<TowerSet, TrajError> {
    if !(spacing_m > 0.0) {
        return Err(TrajError::NonPositive("tower spacing"));
    }
    let bbox = net.bounding_box().ok_or(TrajError::NoTowers)?;
    let width = haversine(GeoPoint::new(bbox.min_lon, bbox.min_lat), GeoPoint::new(bbox.max_lon, bbox.min_lat));
    let height = haversine(GeoPoint::new(bbox.min_lon, bbox.min_lat), GeoPoint::new(bbox.min_lon, bbox.max_lat));
    let n = ((width.max(spacing_m) * height.max(spacing_m)) / (spacing_m * spacing_m)).ceil().max(1.0) as usize;
    let mut rng = seeded_rng(seed);
    let towers = (0..n)
        .map(|i| Tower {
            tower_id: format!("c{i}"),
            pos: GeoPoint::new(
                bbox.min_lon + rng.random::<f64>() * (bbox.max_lon - bbox.min_lon),
                bbox.min_lat + rng.random::<f64>() * (bbox.max_lat - bbox.min_lat),
            ),
        })
        .collect();
    TowerSet::new(towers)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn straight(n_edges: usize, edge_m: f64) -> RoadNetwork {
        let mut b = NetworkBuilder::new();
        let deg = edge_m / (EARTH_RADIUS_M * std::f64::consts::PI / 180.0);
        for i in 0..=n_edges {
            b.add_node(format!("n{i}"), GeoPoint::new(i as f64 * deg, 0.0), None);
        }
        for i in 0..n_edges {
            b.add_edge(EdgeSpec::new(format!("e{i}"), format!("n{i}"), format!("n{}", i + 1)).with_geometry_length(edge_m));
        }
        b.build().unwrap()
    }

    /// Independent validator: contiguous, and length by plain summation.
    fn check_path(net: &RoadNetwork, path: &[usize], min_len: f64) {
        assert!(!path.is_empty());
        for w in path.windows(2) {
            assert!(net.successors(&net.edge(w[0]).id).unwrap().contains(&net.edge(w[1]).id.as_str()));
        }
        let len: f64 = path.iter().map(|&e| net.edge(e).length_m).sum();
        assert!(len >= min_len - 1e-6, "{len} < {min_len}");
    }

    #[test]
    fn chain_has_only_one_long_path() {
        let net = NetworkBuilder::new()
            .node("A", 0.0, 0.0)
            .node("B", 0.001, 0.0)
            .node("C", 0.002, 0.0)
            .edge(EdgeSpec::new("ab", "A", "B"))
            .edge(EdgeSpec::new("bc", "B", "C"))
            .build()
            .unwrap();
        let total = net.edge(0).length_m + net.edge(1).length_m;
        for seed in 0..20 {
            let p = generate_path(&net, seed, total).unwrap();
            assert_eq!(net.edge_ids(&p), vec!["ab", "bc"]);
        }
        assert!(matches!(generate_path(&net, 1, total + 1.0), Err(TrajError::PathExhausted { .. })));
    }

    #[test]
    fn path_is_deterministic_and_valid_on_grid() {
        let net = grid_network(&GridSpec { rows: 4, cols: 4, ..GridSpec::default() }, 3);
        let a = generate_path(&net, 7, 400.0).unwrap();
        let b = generate_path(&net, 7, 400.0).unwrap();
        assert_eq!(a, b);
        check_path(&net, &a, 400.0);
        for seed in 0..50 {
            check_path(&net, &generate_path(&net, seed, 300.0).unwrap(), 300.0);
        }
    }

    #[test]
    fn sampling_straight_path() {
        let net = straight(3, 400.0);
        let pts = sample_positions(&[0, 1, 2], &net, 10.0, 12.0).unwrap();
        assert_eq!(pts.len(), 11);
        for w in pts.windows(2) {
            let d = haversine(w[0].pos, w[1].pos);
            assert!((d - 120.0).abs() < 0.5, "{d}");
        }
        assert_eq!(pts[0].pos, net.from_pos(0));
        assert_eq!(pts[10].pos, net.to_pos(2));
        assert!((pts[10].t - 120.0).abs() < 1e-9);
    }

    #[test]
    fn long_interval_gives_endpoints() {
        let net = straight(2, 300.0);
        let pts = sample_positions(&[0, 1], &net, 10.0, 600.0).unwrap();
        assert_eq!(pts.len(), 2);
        assert_eq!(pts[0].pos, net.from_pos(0));
        assert_eq!(pts[1].pos, net.to_pos(1));
    }

    #[test]
    fn sampling_l_shape_matches_arc_length_oracle() {
        // A(0,0) → B(0.002,0) → C(0.002,0.001)
        let net = NetworkBuilder::new()
            .node("A", 0.0, 0.0)
            .node("B", 0.002, 0.0)
            .node("C", 0.002, 0.001)
            .edge(EdgeSpec::new("ab", "A", "B"))
            .edge(EdgeSpec::new("bc", "B", "C"))
            .build()
            .unwrap();
        let l1 = net.edge(0).length_m;
        let l2 = net.edge(1).length_m;
        let spacing = 50.0;
        let pts = sample_positions(&[0, 1], &net, 5.0, 10.0).unwrap();
        // oracle: the k-th point sits at arc length k·spacing
        for (k, p) in pts.iter().enumerate().take(pts.len() - 1) {
            let s = k as f64 * spacing;
            let expect = if s <= l1 {
                GeoPoint::new(0.002 * s / l1, 0.0)
            } else {
                GeoPoint::new(0.002, 0.001 * (s - l1) / l2)
            };
            assert!((p.pos.lon - expect.lon).abs() < 1e-12 && (p.pos.lat - expect.lat).abs() < 1e-12, "{k}");
        }
        assert_eq!(pts.len(), ((l1 + l2) / spacing).ceil() as usize + 1);
    }

    #[test]
    fn sampling_errors() {
        let net = straight(1, 100.0);
        assert_eq!(sample_positions(&[], &net, 1.0, 1.0), Err(TrajError::DegeneratePath));
        assert_eq!(sample_positions(&[0], &net, 0.0, 1.0), Err(TrajError::NonPositive("speed")));
        assert_eq!(sample_positions(&[0], &net, 1.0, -1.0), Err(TrajError::NonPositive("interval")));
    }

    fn tower(id: &str, lon: f64, lat: f64) -> Tower {
        Tower { tower_id: id.into(), pos: GeoPoint::new(lon, lat) }
    }

    fn at(lon: f64, lat: f64, t: f64) -> TimedPosition {
        TimedPosition { pos: GeoPoint::new(lon, lat), t }
    }

    #[test]
    fn exact_towers_noise_free() {
        let towers = TowerSet::new(vec![tower("a", 0.0, 0.0), tower("b", 0.001, 0.0), tower("c", 0.002, 0.0)]).unwrap();
        let pos = [at(0.0, 0.0, 0.0), at(0.0, 0.0, 1.0), at(0.001, 0.0, 2.0), at(0.002, 0.0, 3.0)];
        let traj = observe_towers("x", &pos, &towers, 0.0, 1, 0.0).unwrap();
        let ids: Vec<&str> = traj.samples().iter().map(|s| s.tower_id.as_str()).collect();
        assert_eq!(ids, vec!["a", "b", "c"]);
        assert_eq!(traj.samples()[1].t, 2.0);
    }

    #[test]
    fn single_tower_trajectory_rejected() {
        let towers = TowerSet::new(vec![tower("a", 0.0, 0.0), tower("b", 1.0, 0.0)]).unwrap();
        let pos = [at(0.0, 0.0, 0.0), at(0.0001, 0.0, 1.0)];
        let err = observe_towers("x", &pos, &towers, 0.0, 1, 0.0).unwrap_err();
        assert_eq!(err, TrajError::TooFewSamples("x".into()));
        assert!(err.to_string().contains("fewer than 2 samples"));
    }

    #[test]
    fn softmax_selection_frequencies() {
        // three towers at 0, ~200 m and ~400 m east of the observation point
        let towers =
            TowerSet::new(vec![tower("a", 0.0, 0.0), tower("b", 0.0018, 0.0), tower("c", 0.0036, 0.0)]).unwrap();
        let sigma = 300.0;
        let p = GeoPoint::new(0.0005, 0.0);
        let d: Vec<f64> = towers.towers().iter().map(|t| haversine(p, t.pos)).collect();
        let w: Vec<f64> = d.iter().map(|d| (-d * d / (2.0 * sigma * sigma)).exp()).collect();
        let z: f64 = w.iter().sum();
        let probs: Vec<f64> = w.iter().map(|x| x / z).collect();

        let n = 100_000;
        let mut counts = [0usize; 3];
        let mut rng = seeded_rng(99);
        for _ in 0..n {
            counts[select_tower(p, &towers, sigma, &mut rng)] += 1;
        }
        for i in 0..3 {
            let f = counts[i] as f64 / n as f64;
            let se = (probs[i] * (1.0 - probs[i]) / n as f64).sqrt();
            assert!((f - probs[i]).abs() <= 3.0 * se, "tower {i}: {f} vs {}", probs[i]);
        }
    }

    #[test]
    fn nearest_towers_sorted_and_bounded() {
        let towers: Vec<Tower> = (0..20).map(|i| tower(&format!("t{i}"), i as f64 * 0.001, 0.0)).collect();
        let set = TowerSet::new(towers).unwrap();
        let near = nearest_towers(GeoPoint::new(0.0101, 0.0), &set, 5);
        let ids: Vec<usize> = near.iter().map(|x| x.0).collect();
        assert_eq!(ids, vec![10, 11, 9, 12, 8]);
    }

    #[test]
    fn trajectory_length_cases() {
        let s = |id: &str, lon: f64, t: f64| CellTowerSample { tower_id: id.into(), pos: GeoPoint::new(lon, 0.0), t };
        let same = CellularTrajectory::new("a", vec![s("x", 0.0, 0.0), s("y", 0.0, 1.0)]).unwrap();
        assert_eq!(trajectory_length(&same), 0.0);
        let tr = CellularTrajectory::new("b", vec![s("x", 0.0, 0.0), s("y", 0.001, 1.0), s("z", 0.0015, 2.0)]).unwrap();
        let expected = EARTH_RADIUS_M * 0.0015_f64.to_radians();
        assert!((trajectory_length(&tr) - expected).abs() < 1e-6);
        assert!((trajectory_length(&tr.reversed()) - trajectory_length(&tr)).abs() < 1e-9);
    }

    #[test]
    fn trajectory_invariants_enforced() {
        let s = |id: &str, t: f64| CellTowerSample { tower_id: id.into(), pos: GeoPoint::new(0.0, 0.0), t };
        assert!(matches!(
            CellularTrajectory::new("a", vec![s("x", 1.0), s("y", 0.0)]),
            Err(TrajError::TimeDecreasing { index: 1, .. })
        ));
        assert!(matches!(
            CellularTrajectory::new("a", vec![s("x", 0.0), s("x", 1.0)]),
            Err(TrajError::DuplicateTower { index: 1, .. })
        ));
        let json = r#"{"traj_id":"q","samples":[{"tower_id":"x","lon":0,"lat":0,"t":0}]}"#;
        assert!(serde_json::from_str::<CellularTrajectory>(json).is_err());
    }

    #[test]
    fn synthesized_pairs_are_jointly_valid() {
        let net = grid_network(&GridSpec { rows: 8, cols: 8, ..GridSpec::default() }, 1);
        let cfg = SynthConfig { count: 20, min_length_m: 600.0, noise_sigma_m: 150.0, ..SynthConfig::default() };
        let ds = synthesize(&net, &cfg).unwrap();
        assert_eq!(ds.trajectories.len(), 20);
        for (traj, gt) in ds.trajectories.iter().zip(&ds.ground_truth) {
            assert_eq!(traj.traj_id(), gt.traj_id);
            gt.resolve(&net).unwrap();
            CellularTrajectory::new(traj.traj_id(), traj.samples().to_vec()).unwrap();
        }
        assert_eq!(synthesize(&net, &cfg).unwrap(), ds);
    }

    #[test]
    fn dense_towers_reproduce_sampling_distance() {
        // edges are one sampling step long, so no remainder gap at the end
        let net = straight(40, 120.0);
        let cfg = SynthConfig {
            count: 10,
            min_length_m: 2400.0,
            towers: TowerLayout::OnPath,
            ..SynthConfig::default()
        };
        let ds = synthesize(&net, &cfg).unwrap();
        let spacing = cfg.speed_mps * cfg.interval_s;
        for traj in &ds.trajectories {
            let avg = trajectory_length(traj) / (traj.len() - 1) as f64;
            assert!((avg - spacing).abs() <= 0.01 * spacing, "{avg}");
        }
    }
}
