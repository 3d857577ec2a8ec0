//! Dataset files: towers.csv, trajectories/ground-truth/match JSONL, and
//! network CSVs for generated networks.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::raster::Channel;
use crate::roadnet::{GeoPoint, RoadNetwork};
use crate::trajgen::{Tower, TowerSet, TrajError};

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: {source}")]
    Invalid { path: PathBuf, source: TrajError },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io { path: path.to_path_buf(), source }
}

/// Read one JSON object per non-blank line.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, IoError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| IoError::Parse { path: path.to_path_buf(), line: i + 1, message: e.to_string() })?;
        out.push(item);
    }
    Ok(out)
}

/// One compact JSON object per line, LF-terminated.
pub fn encode_jsonl<T: Serialize>(items: &[T]) -> Vec<u8> {
    let mut buf = Vec::new();
    for item in items {
        serde_json::to_writer(&mut buf, item).expect("serializable");
        buf.push(b'\n');
    }
    buf
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), IoError> {
    std::fs::write(path, encode_jsonl(items)).map_err(io_err(path))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    std::fs::write(path, s).map_err(io_err(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| IoError::Parse { path: path.to_path_buf(), line: e.line(), message: e.to_string() })
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> IoError + '_ {
    move |source| IoError::Csv { path: path.to_path_buf(), source }
}

#[derive(serde::Deserialize, Serialize)]
struct TowerRow {
    tower_id: String,
    lon: f64,
    lat: f64,
}

/// `tower_id,lon,lat`.
pub fn read_towers(path: &Path) -> Result<TowerSet, IoError> {
    let mut rdr = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let mut towers = Vec::new();
    for row in rdr.deserialize::<TowerRow>() {
        let row = row.map_err(csv_err(path))?;
        towers.push(Tower { tower_id: row.tower_id, pos: GeoPoint::new(row.lon, row.lat) });
    }
    TowerSet::new(towers).map_err(|source| IoError::Invalid { path: path.to_path_buf(), source })
}

pub fn write_towers(path: &Path, towers: &TowerSet) -> Result<(), IoError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    for t in towers.towers() {
        w.serialize(TowerRow { tower_id: t.tower_id.clone(), lon: t.pos.lon, lat: t.pos.lat }).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Write `nodes.csv` and `edges.csv` in the loader's format. Lengths are
/// written explicitly so a reload reproduces them exactly.
pub fn write_network(net: &RoadNetwork, nodes_path: &Path, edges_path: &Path) -> Result<(), IoError> {
    let mut w = BufWriter::new(File::create(nodes_path).map_err(io_err(nodes_path))?);
    writeln!(w, "node_id,lon,lat").map_err(io_err(nodes_path))?;
    for n in net.nodes() {
        writeln!(w, "{},{},{}", n.id, n.pos.lon, n.pos.lat).map_err(io_err(nodes_path))?;
    }
    w.flush().map_err(io_err(nodes_path))?;
    let mut w = BufWriter::new(File::create(edges_path).map_err(io_err(edges_path))?);
    writeln!(w, "edge_id,from_node,to_node,length_m").map_err(io_err(edges_path))?;
    for e in net.edges() {
        writeln!(w, "{},{},{},{}", e.id, net.node(e.from).id, net.node(e.to).id, e.length_m).map_err(io_err(edges_path))?;
    }
    w.flush().map_err(io_err(edges_path))
}

/// File-system safe rendering of a trajectory id.
pub fn file_stem(traj_id: &str) -> String {
    traj_id.chars().map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' }).collect()
}

/// `<dir>/<traj_id>.<channel>.pgm`.
pub fn grid_path(dir: &Path, traj_id: &str, channel: Channel) -> PathBuf {
    dir.join(format!("{}.{}.pgm", file_stem(traj_id), channel.name()))
}
