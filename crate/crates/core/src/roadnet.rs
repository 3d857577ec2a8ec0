//! Directed road networks: nodes at intersections, straight directed edges
//! between them, and successor adjacency.
//!
//! Nodes and edges are stored sorted by id (see [`cmp_ids`]), so an edge's
//! index doubles as its rank in the canonical edge ordering.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

/// Mean Earth radius used for every great-circle computation.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Relative tolerance between a supplied edge length and the haversine
/// distance of its endpoints.
pub const LENGTH_TOLERANCE: f64 = 0.005;

#[derive(Debug, thiserror::Error)]
pub enum NetworkError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },
    #[error("{}edge {edge} references unknown node {node}", line_prefix(*line))]
    DanglingNode {
        edge: String,
        node: String,
        line: Option<u64>,
    },
    #[error("{}edge {edge} has non-positive length {length}", line_prefix(*line))]
    NonPositiveLength {
        edge: String,
        length: f64,
        line: Option<u64>,
    },
    #[error(
        "{}edge {edge}: length {given} m deviates from endpoint distance {computed:.3} m by more than 0.5%",
        line_prefix(*line)
    )]
    LengthMismatch {
        edge: String,
        given: f64,
        computed: f64,
        line: Option<u64>,
    },
    #[error("{}edge {edge} starts and ends at {node} but is not flagged as a loop", line_prefix(*line))]
    UnflaggedLoop {
        edge: String,
        node: String,
        line: Option<u64>,
    },
    #[error("{}duplicate {kind} id {id}", line_prefix(*line))]
    DuplicateId {
        kind: &'static str,
        id: String,
        line: Option<u64>,
    },
    #[error("{}node {node} has invalid coordinate ({lon}, {lat})", line_prefix(*line))]
    InvalidCoordinate {
        node: String,
        lon: f64,
        lat: f64,
        line: Option<u64>,
    },
    #[error("unknown edge {0}")]
    UnknownEdge(String),
}

fn line_prefix(line: Option<u64>) -> String {
    line.map(|l| format!("line {l}: ")).unwrap_or_default()
}

/// Geographic position in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lon: f64,
    pub lat: f64,
}

impl GeoPoint {
    pub const fn new(lon: f64, lat: f64) -> Self {
        Self { lon, lat }
    }

    pub fn is_valid(&self) -> bool {
        self.lon.is_finite()
            && self.lat.is_finite()
            && (-180.0..=180.0).contains(&self.lon)
            && (-90.0..=90.0).contains(&self.lat)
    }
}

impl fmt::Display for GeoPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.lon, self.lat)
    }
}

/// Great-circle distance in meters.
pub fn haversine(a: GeoPoint, b: GeoPoint) -> f64 {
    let (phi1, phi2) = (a.lat.to_radians(), b.lat.to_radians());
    let dphi = phi2 - phi1;
    let dlambda = (b.lon - a.lon).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// Axis-aligned lon/lat rectangle, bounds inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoWindow {
    pub min_lon: f64,
    pub min_lat: f64,
    pub max_lon: f64,
    pub max_lat: f64,
}

impl GeoWindow {
    pub fn contains(&self, p: GeoPoint) -> bool {
        p.lon >= self.min_lon && p.lon <= self.max_lon && p.lat >= self.min_lat && p.lat <= self.max_lat
    }
}

/// Canonical id ordering: ids that parse as unsigned integers sort
/// numerically and before all others, the rest sort bytewise.
pub fn cmp_ids(a: &str, b: &str) -> Ordering {
    match (a.parse::<u64>(), b.parse::<u64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y).then_with(|| a.cmp(b)),
        (Ok(_), Err(_)) => Ordering::Less,
        (Err(_), Ok(_)) => Ordering::Greater,
        (Err(_), Err(_)) => a.cmp(b),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoadNode {
    pub id: String,
    pub pos: GeoPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoadEdge {
    pub id: String,
    /// Index of the tail node in [`RoadNetwork::nodes`].
    pub from: usize,
    /// Index of the head node in [`RoadNetwork::nodes`].
    pub to: usize,
    pub length_m: f64,
    pub is_loop: bool,
}

impl RoadEdge {
    /// Length in integer micrometers; path arithmetic is done in this unit
    /// so that sums are exact and order independent.
    pub fn length_um(&self) -> u64 {
        meters_to_um(self.length_m)
    }
}

pub fn meters_to_um(m: f64) -> u64 {
    (m * 1e6).round().max(0.0) as u64
}

pub fn um_to_meters(um: u64) -> f64 {
    um as f64 / 1e6
}

/// Unvalidated edge description fed to [`NetworkBuilder`].
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeSpec {
    pub id: String,
    pub from_node: String,
    pub to_node: String,
    pub length_m: Option<f64>,
    /// Length comes from a polyline geometry; skip the endpoint-distance check.
    pub geometry_override: bool,
    pub is_loop: bool,
    pub line: Option<u64>,
}

impl EdgeSpec {
    pub fn new(id: impl Into<String>, from: impl Into<String>, to: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            from_node: from.into(),
            to_node: to.into(),
            length_m: None,
            geometry_override: false,
            is_loop: false,
            line: None,
        }
    }

    pub fn with_length(mut self, length_m: f64) -> Self {
        self.length_m = Some(length_m);
        self
    }

    /// Trust `length_m` as a polyline length.
    pub fn with_geometry_length(mut self, length_m: f64) -> Self {
        self.length_m = Some(length_m);
        self.geometry_override = true;
        self
    }

    pub fn looped(mut self) -> Self {
        self.is_loop = true;
        self
    }
}

#[derive(Debug, Default, Clone)]
pub struct NetworkBuilder {
    nodes: Vec<(String, GeoPoint, Option<u64>)>,
    edges: Vec<EdgeSpec>,
}

impl NetworkBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn node(mut self, id: impl Into<String>, lon: f64, lat: f64) -> Self {
        self.add_node(id, GeoPoint::new(lon, lat), None);
        self
    }

    pub fn edge(mut self, spec: EdgeSpec) -> Self {
        self.edges.push(spec);
        self
    }

    pub fn add_node(&mut self, id: impl Into<String>, pos: GeoPoint, line: Option<u64>) {
        self.nodes.push((id.into(), pos, line));
    }

    pub fn add_edge(&mut self, spec: EdgeSpec) {
        self.edges.push(spec);
    }

    pub fn build(self) -> Result<RoadNetwork, NetworkError> {
        let mut nodes = Vec::with_capacity(self.nodes.len());
        for (id, pos, line) in self.nodes {
            if !pos.is_valid() {
                return Err(NetworkError::InvalidCoordinate { node: id, lon: pos.lon, lat: pos.lat, line });
            }
            nodes.push((RoadNode { id, pos }, line));
        }
        nodes.sort_by(|a, b| cmp_ids(&a.0.id, &b.0.id));
        if let Some(w) = nodes.windows(2).find(|w| w[0].0.id == w[1].0.id) {
            return Err(NetworkError::DuplicateId { kind: "node", id: w[1].0.id.clone(), line: w[1].1 });
        }
        let nodes: Vec<RoadNode> = nodes.into_iter().map(|(n, _)| n).collect();
        let node_index: HashMap<String, usize> =
            nodes.iter().enumerate().map(|(i, n)| (n.id.clone(), i)).collect();

        let mut edges = Vec::with_capacity(self.edges.len());
        for spec in self.edges {
            let lookup = |node: &str| {
                node_index.get(node).copied().ok_or_else(|| NetworkError::DanglingNode {
                    edge: spec.id.clone(),
                    node: node.to_string(),
                    line: spec.line,
                })
            };
            let from = lookup(&spec.from_node)?;
            let to = lookup(&spec.to_node)?;
            if from == to && !spec.is_loop {
                return Err(NetworkError::UnflaggedLoop { edge: spec.id, node: spec.from_node, line: spec.line });
            }
            let computed = haversine(nodes[from].pos, nodes[to].pos);
            let length_m = match spec.length_m {
                None => computed,
                Some(given) => {
                    if given.is_finite()
                        && given > 0.0
                        && !spec.geometry_override
                        && !spec.is_loop
                        && (given - computed).abs() > LENGTH_TOLERANCE * computed
                    {
                        return Err(NetworkError::LengthMismatch { edge: spec.id, given, computed, line: spec.line });
                    }
                    given
                }
            };
            if !(length_m.is_finite() && length_m > 0.0) {
                return Err(NetworkError::NonPositiveLength { edge: spec.id, length: length_m, line: spec.line });
            }
            edges.push((RoadEdge { id: spec.id, from, to, length_m, is_loop: spec.is_loop }, spec.line));
        }
        edges.sort_by(|a, b| cmp_ids(&a.0.id, &b.0.id));
        if let Some(w) = edges.windows(2).find(|w| w[0].0.id == w[1].0.id) {
            return Err(NetworkError::DuplicateId { kind: "edge", id: w[1].0.id.clone(), line: w[1].1 });
        }
        let edges = edges.into_iter().map(|(e, _)| e).collect();
        Ok(RoadNetwork::assemble(nodes, node_index, edges))
    }
}

/// Immutable directed road graph.
#[derive(Debug, Clone)]
pub struct RoadNetwork {
    nodes: Vec<RoadNode>,
    edges: Vec<RoadEdge>,
    node_index: HashMap<String, usize>,
    edge_index: HashMap<String, usize>,
    out_edges: Vec<Vec<usize>>,
}

impl PartialEq for RoadNetwork {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes && self.edges == other.edges
    }
}

impl RoadNetwork {
    fn assemble(nodes: Vec<RoadNode>, node_index: HashMap<String, usize>, edges: Vec<RoadEdge>) -> Self {
        let edge_index = edges.iter().enumerate().map(|(i, e)| (e.id.clone(), i)).collect();
        let mut out_edges = vec![Vec::new(); nodes.len()];
        // edges are id-sorted, so each list comes out ascending
        for (i, e) in edges.iter().enumerate() {
            out_edges[e.from].push(i);
        }
        Self { nodes, edges, node_index, edge_index, out_edges }
    }

    pub fn nodes(&self) -> &[RoadNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[RoadEdge] {
        &self.edges
    }

    pub fn node(&self, idx: usize) -> &RoadNode {
        &self.nodes[idx]
    }

    pub fn edge(&self, idx: usize) -> &RoadEdge {
        &self.edges[idx]
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn node_idx(&self, id: &str) -> Option<usize> {
        self.node_index.get(id).copied()
    }

    pub fn edge_idx(&self, id: &str) -> Option<usize> {
        self.edge_index.get(id).copied()
    }

    pub fn require_edge(&self, id: &str) -> Result<usize, NetworkError> {
        self.edge_idx(id).ok_or_else(|| NetworkError::UnknownEdge(id.to_string()))
    }

    pub fn from_pos(&self, edge: usize) -> GeoPoint {
        self.nodes[self.edges[edge].from].pos
    }

    pub fn to_pos(&self, edge: usize) -> GeoPoint {
        self.nodes[self.edges[edge].to].pos
    }

    /// Edges leaving the head node of `edge`, ascending by index.
    pub fn successor_indices(&self, edge: usize) -> &[usize] {
        &self.out_edges[self.edges[edge].to]
    }

    /// Edges leaving `node`, ascending by index.
    pub fn out_edges(&self, node: usize) -> &[usize] {
        &self.out_edges[node]
    }

    pub fn successors(&self, edge_id: &str) -> Result<Vec<&str>, NetworkError> {
        let idx = self.require_edge(edge_id)?;
        Ok(self.successor_indices(idx).iter().map(|&s| self.edges[s].id.as_str()).collect())
    }

    pub fn bounding_box(&self) -> Option<GeoWindow> {
        let first = self.nodes.first()?.pos;
        let init = GeoWindow { min_lon: first.lon, min_lat: first.lat, max_lon: first.lon, max_lat: first.lat };
        Some(self.nodes.iter().fold(init, |w, n| GeoWindow {
            min_lon: w.min_lon.min(n.pos.lon),
            min_lat: w.min_lat.min(n.pos.lat),
            max_lon: w.max_lon.max(n.pos.lon),
            max_lat: w.max_lat.max(n.pos.lat),
        }))
    }

    /// Subnetwork of edges with at least one endpoint inside `window`.
    /// Keeps nodes inside the window plus the far endpoints of kept edges.
    pub fn clip_window(&self, window: &GeoWindow) -> RoadNetwork {
        let inside: Vec<bool> = self.nodes.iter().map(|n| window.contains(n.pos)).collect();
        let kept: Vec<&RoadEdge> = self.edges.iter().filter(|e| inside[e.from] || inside[e.to]).collect();
        let mut keep_node = inside;
        for e in &kept {
            keep_node[e.from] = true;
            keep_node[e.to] = true;
        }
        let mut remap = vec![usize::MAX; self.nodes.len()];
        let mut nodes = Vec::new();
        for (i, n) in self.nodes.iter().enumerate() {
            if keep_node[i] {
                remap[i] = nodes.len();
                nodes.push(n.clone());
            }
        }
        let node_index = nodes.iter().enumerate().map(|(i, n)| (n.id.clone(), i)).collect();
        let edges = kept
            .into_iter()
            .map(|e| RoadEdge { from: remap[e.from], to: remap[e.to], ..e.clone() })
            .collect();
        RoadNetwork::assemble(nodes, node_index, edges)
    }

    /// Sum of edge lengths along `edges`, in micrometers.
    pub fn path_length_um(&self, edges: &[usize]) -> u64 {
        edges.iter().map(|&e| self.edges[e].length_um()).sum()
    }

    /// True when every consecutive pair is joined head-to-tail.
    pub fn is_connected_path(&self, edges: &[usize]) -> bool {
        edges.windows(2).all(|w| self.edges[w[0]].to == self.edges[w[1]].from)
    }

    /// Resolve a list of edge ids to indices.
    pub fn resolve_edges<S: AsRef<str>>(&self, ids: &[S]) -> Result<Vec<usize>, NetworkError> {
        ids.iter().map(|id| self.require_edge(id.as_ref())).collect()
    }

    pub fn edge_ids(&self, edges: &[usize]) -> Vec<String> {
        edges.iter().map(|&e| self.edges[e].id.clone()).collect()
    }
}

/// Load a network from `nodes.csv` (`node_id,lon,lat`) and `edges.csv`
/// (`edge_id,from_node,to_node,length_m`, optional `geometry` and `loop`
/// columns). Empty `length_m` cells are filled with the haversine distance.
pub fn load_network(nodes_path: &Path, edges_path: &Path) -> Result<RoadNetwork, NetworkError> {
    let mut builder = NetworkBuilder::new();

    let mut rdr = open_csv(nodes_path)?;
    let cols = columns(&mut rdr, nodes_path, &["node_id", "lon", "lat"], &[])?;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(nodes_path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let id = field(&rec, cols[0], line, "node_id")?;
        let lon = parse_f64(field(&rec, cols[1], line, "lon")?, line, "lon")?;
        let lat = parse_f64(field(&rec, cols[2], line, "lat")?, line, "lat")?;
        if id.is_empty() {
            return Err(NetworkError::Malformed { line, message: "empty node_id".into() });
        }
        builder.add_node(id, GeoPoint::new(lon, lat), Some(line));
    }

    let mut rdr = open_csv(edges_path)?;
    let cols = columns(&mut rdr, edges_path, &["edge_id", "from_node", "to_node", "length_m"], &["geometry", "loop"])?;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(edges_path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let id = field(&rec, cols[0], line, "edge_id")?;
        if id.is_empty() {
            return Err(NetworkError::Malformed { line, message: "empty edge_id".into() });
        }
        let mut spec = EdgeSpec::new(id, field(&rec, cols[1], line, "from_node")?, field(&rec, cols[2], line, "to_node")?);
        spec.line = Some(line);
        let len = field(&rec, cols[3], line, "length_m")?;
        if !len.is_empty() {
            spec.length_m = Some(parse_f64(len, line, "length_m")?);
        }
        if let Some(c) = cols[4] {
            spec.geometry_override = rec.get(c).is_some_and(|g| !g.trim().is_empty());
        }
        if let Some(c) = cols[5] {
            spec.is_loop = match rec.get(c).map(str::trim).unwrap_or("") {
                "" | "0" | "false" => false,
                "1" | "true" => true,
                other => {
                    return Err(NetworkError::Malformed { line, message: format!("bad loop flag {other:?}") })
                }
            };
        }
        builder.add_edge(spec);
    }
    builder.build()
}

fn open_csv(path: &Path) -> Result<csv::Reader<std::fs::File>, NetworkError> {
    let file = std::fs::File::open(path).map_err(|source| NetworkError::Io { path: path.to_path_buf(), source })?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

fn csv_error(path: &Path, e: csv::Error) -> NetworkError {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(source) => NetworkError::Io { path: path.to_path_buf(), source },
        kind => NetworkError::Malformed { line, message: format!("{kind:?}") },
    }
}

/// Column positions for `required` followed by `optional` (as `Option`s,
/// required ones always `Some`).
fn columns(
    rdr: &mut csv::Reader<std::fs::File>,
    path: &Path,
    required: &[&str],
    optional: &[&str],
) -> Result<Vec<Option<usize>>, NetworkError> {
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let mut out = Vec::new();
    for name in required {
        let pos = find(name).ok_or_else(|| NetworkError::Malformed {
            line: 1,
            message: format!("{}: missing column {name}", path.display()),
        })?;
        out.push(Some(pos));
    }
    out.extend(optional.iter().map(|n| find(n)));
    Ok(out)
}

fn field<'r>(rec: &'r csv::StringRecord, col: Option<usize>, line: u64, name: &str) -> Result<&'r str, NetworkError> {
    col.and_then(|c| rec.get(c))
        .ok_or_else(|| NetworkError::Malformed { line, message: format!("missing field {name}") })
}

fn parse_f64(s: &str, line: u64, name: &str) -> Result<f64, NetworkError> {
    s.parse::<f64>()
        .map_err(|_| NetworkError::Malformed { line, message: format!("{name}: cannot parse {s:?} as a number") })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    /// R·Δλ at the equator, written out independently of the haversine formula.
    fn equator_arc(dlon_deg: f64) -> f64 {
        EARTH_RADIUS_M * dlon_deg * std::f64::consts::PI / 180.0
    }

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::File::create(&p).unwrap().write_all(body.as_bytes()).unwrap();
        p
    }

    #[test]
    fn haversine_identity_and_equator() {
        let a = GeoPoint::new(120.1, 30.2);
        assert_eq!(haversine(a, a), 0.0);
        let d = haversine(GeoPoint::new(0.0, 0.0), GeoPoint::new(0.001, 0.0));
        assert!((d - equator_arc(0.001)).abs() < 1e-9);
        assert!((d - 111.19).abs() < 0.01);
    }

    #[test]
    fn load_fills_missing_length() {
        let dir = tempfile::tempdir().unwrap();
        let n = write(dir.path(), "nodes.csv", "node_id,lon,lat\nA,0,0\nB,0.001,0\n");
        let e = write(dir.path(), "edges.csv", "edge_id,from_node,to_node,length_m\ne1,A,B,\n");
        let net = load_network(&n, &e).unwrap();
        assert_eq!(net.edge_count(), 1);
        assert!((net.edge(0).length_m - equator_arc(0.001)).abs() < 1e-9);
    }

    #[test]
    fn load_empty_edges() {
        let dir = tempfile::tempdir().unwrap();
        let n = write(dir.path(), "nodes.csv", "node_id,lon,lat\nA,0,0\n");
        let e = write(dir.path(), "edges.csv", "edge_id,from_node,to_node,length_m\n");
        let net = load_network(&n, &e).unwrap();
        assert_eq!(net.edge_count(), 0);
        assert_eq!(net.node_count(), 1);
        assert!(net.out_edges(0).is_empty());
    }

    #[test]
    fn dangling_node_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let n = write(dir.path(), "nodes.csv", "node_id,lon,lat\nA,0,0\n");
        let e = write(dir.path(), "edges.csv", "edge_id,from_node,to_node,length_m\ne1,A,Z,\n");
        let err = load_network(&n, &e).unwrap_err();
        assert!(matches!(&err, NetworkError::DanglingNode { node, line: Some(2), .. } if node == "Z"), "{err}");
        assert!(err.to_string().contains('Z'));
    }

    #[test]
    fn malformed_row_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let n = write(dir.path(), "nodes.csv", "node_id,lon,lat\nA,0,0\nB,abc,0\n");
        let e = write(dir.path(), "edges.csv", "edge_id,from_node,to_node,length_m\n");
        match load_network(&n, &e).unwrap_err() {
            NetworkError::Malformed { line, .. } => assert_eq!(line, 3),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn length_validation() {
        let base = || NetworkBuilder::new().node("A", 0.0, 0.0).node("B", 0.001, 0.0);
        let err = base().edge(EdgeSpec::new("e", "A", "B").with_length(0.0)).build().unwrap_err();
        assert!(matches!(err, NetworkError::NonPositiveLength { .. }));
        let err = base().edge(EdgeSpec::new("e", "A", "B").with_length(-3.0)).build().unwrap_err();
        assert!(matches!(err, NetworkError::NonPositiveLength { .. }));
        let err = base().edge(EdgeSpec::new("e", "A", "B").with_length(120.0)).build().unwrap_err();
        assert!(matches!(err, NetworkError::LengthMismatch { .. }));
        // within 0.5%
        base().edge(EdgeSpec::new("e", "A", "B").with_length(111.5)).build().unwrap();
        // polyline length trusted
        let net = base().edge(EdgeSpec::new("e", "A", "B").with_geometry_length(150.0)).build().unwrap();
        assert_eq!(net.edge(0).length_m, 150.0);
    }

    #[test]
    fn loops_require_flag() {
        let base = || NetworkBuilder::new().node("A", 0.0, 0.0);
        let err = base().edge(EdgeSpec::new("e", "A", "A").with_length(10.0)).build().unwrap_err();
        assert!(matches!(err, NetworkError::UnflaggedLoop { .. }));
        let net = base().edge(EdgeSpec::new("e", "A", "A").with_length(10.0).looped()).build().unwrap();
        assert_eq!(net.successors("e").unwrap(), vec!["e"]);
        // a loop still needs a length
        let err = base().edge(EdgeSpec::new("e", "A", "A").looped()).build().unwrap_err();
        assert!(matches!(err, NetworkError::NonPositiveLength { .. }));
    }

    #[test]
    fn successors_chain_terminal_and_junction() {
        let net = NetworkBuilder::new()
            .node("A", 0.0, 0.0)
            .node("B", 0.001, 0.0)
            .node("C", 0.002, 0.0)
            .node("D", 0.002, 0.001)
            .node("E", 0.001, 0.001)
            .edge(EdgeSpec::new("ab", "A", "B"))
            .edge(EdgeSpec::new("bc", "B", "C"))
            .edge(EdgeSpec::new("cd", "C", "D"))
            .build()
            .unwrap();
        assert_eq!(net.successors("ab").unwrap(), vec!["bc"]);
        assert_eq!(net.successors("cd").unwrap(), Vec::<&str>::new());
        assert!(matches!(net.successors("zz"), Err(NetworkError::UnknownEdge(_))));

        let net = NetworkBuilder::new()
            .node("A", 0.0, 0.0)
            .node("B", 0.001, 0.0)
            .node("C", 0.002, 0.0)
            .node("D", 0.001, 0.001)
            .node("E", 0.001, -0.001)
            .edge(EdgeSpec::new("in", "A", "B"))
            .edge(EdgeSpec::new("z", "B", "C"))
            .edge(EdgeSpec::new("m", "B", "D"))
            .edge(EdgeSpec::new("a", "B", "E"))
            .build()
            .unwrap();
        let mut brute: Vec<&str> = net
            .edges()
            .iter()
            .filter(|e| e.from == net.edge(net.edge_idx("in").unwrap()).to)
            .map(|e| e.id.as_str())
            .collect();
        brute.sort();
        assert_eq!(net.successors("in").unwrap(), brute);
        assert_eq!(brute, vec!["a", "m", "z"]);
    }

    #[test]
    fn id_ordering_is_numeric_aware() {
        let mut ids = vec!["e2", "10", "e10", "9", "a"];
        ids.sort_by(|a, b| cmp_ids(a, b));
        assert_eq!(ids, vec!["9", "10", "a", "e10", "e2"]);
    }

    fn chain() -> RoadNetwork {
        NetworkBuilder::new()
            .node("A", 0.0, 0.0)
            .node("B", 0.01, 0.0)
            .node("C", 0.02, 0.0)
            .edge(EdgeSpec::new("ab", "A", "B"))
            .edge(EdgeSpec::new("bc", "B", "C"))
            .build()
            .unwrap()
    }

    #[test]
    fn clip_window_cases() {
        let net = chain();
        let all = net.clip_window(&net.bounding_box().unwrap());
        assert_eq!(all.edges(), net.edges());

        let none = GeoWindow { min_lon: 10.0, min_lat: 10.0, max_lon: 11.0, max_lat: 11.0 };
        assert_eq!(net.clip_window(&none).edge_count(), 0);

        let only_b = GeoWindow { min_lon: 0.005, min_lat: -0.005, max_lon: 0.015, max_lat: 0.005 };
        let clipped = net.clip_window(&only_b);
        let brute: Vec<&str> = net
            .edges()
            .iter()
            .filter(|e| only_b.contains(net.node(e.from).pos) || only_b.contains(net.node(e.to).pos))
            .map(|e| e.id.as_str())
            .collect();
        let got: Vec<&str> = clipped.edges().iter().map(|e| e.id.as_str()).collect();
        assert_eq!(got, brute);
        assert_eq!(got, vec!["ab", "bc"]);
        assert_eq!(clipped.successors("ab").unwrap(), vec!["bc"]);
    }
}
