//! Georeferenced square pixel grids and their PGM + JSON sidecar encoding.
//!
//! Grid row 0 is the southern edge. PGM files store rows north-first, so
//! file row `r` holds grid row `width - 1 - r`.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::roadnet::{GeoPoint, RoadNetwork, EARTH_RADIUS_M};
use crate::trajgen::CellularTrajectory;

/// Default grid side in pixels.
pub const DEFAULT_WIDTH: u32 = 224;
pub const MIN_WIDTH: u32 = 16;

#[derive(Debug, thiserror::Error)]
pub enum RasterError {
    #[error("grid width {0} is below the minimum of 16")]
    WidthTooSmall(u32),
    #[error("buffer must be non-negative and finite, got {0}")]
    BadBuffer(f64),
    #[error("trajectory {0} spans no area and the buffer is zero")]
    DegenerateWindow(String),
    #[error("all {0} trajectory points fall outside the grid window")]
    AllPointsOutside(usize),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: not a binary PGM (bad magic)", path.display())]
    BadMagic { path: PathBuf },
    #[error("{}: {message}", path.display())]
    BadHeader { path: PathBuf, message: String },
    #[error("{}: expected {expected} pixel bytes, found {found}", path.display())]
    SizeMismatch { path: PathBuf, expected: usize, found: usize },
    #[error("missing georef sidecar {}", path.display())]
    MissingSidecar { path: PathBuf },
    #[error("{}: bad sidecar: {source}", path.display())]
    BadSidecar {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

/// Window placement: southwest corner, pixel size and side length.
///
/// Points are projected equirectangularly about the window's center
/// latitude, which keeps pixels metrically square at city scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Georef {
    pub origin: GeoPoint,
    pub meters_per_pixel: f64,
    pub width: u32,
}

const M_PER_DEG_LAT: f64 = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;

impl Georef {
    pub fn new(origin: GeoPoint, meters_per_pixel: f64, width: u32) -> Result<Self, RasterError> {
        if width < MIN_WIDTH {
            return Err(RasterError::WidthTooSmall(width));
        }
        assert!(meters_per_pixel > 0.0 && meters_per_pixel.is_finite(), "meters_per_pixel must be positive");
        Ok(Self { origin, meters_per_pixel, width })
    }

    pub fn side_m(&self) -> f64 {
        self.meters_per_pixel * self.width as f64
    }

    pub fn cell_count(&self) -> usize {
        (self.width as usize) * (self.width as usize)
    }

    fn center_lat(&self) -> f64 {
        self.origin.lat + self.side_m() / 2.0 / M_PER_DEG_LAT
    }

    fn m_per_deg_lon(&self) -> f64 {
        M_PER_DEG_LAT * self.center_lat().to_radians().cos()
    }

    /// Local metric offset of `p` from the origin.
    pub fn project(&self, p: GeoPoint) -> (f64, f64) {
        ((p.lon - self.origin.lon) * self.m_per_deg_lon(), (p.lat - self.origin.lat) * M_PER_DEG_LAT)
    }

    pub fn unproject(&self, x: f64, y: f64) -> GeoPoint {
        GeoPoint::new(self.origin.lon + x / self.m_per_deg_lon(), self.origin.lat + y / M_PER_DEG_LAT)
    }

    /// Cell containing `p` (floor projection; may be out of range).
    pub fn to_pixel(&self, p: GeoPoint) -> (i64, i64) {
        let (x, y) = self.project(p);
        ((x / self.meters_per_pixel).floor() as i64, (y / self.meters_per_pixel).floor() as i64)
    }

    /// Center of cell `(col, row)`.
    pub fn from_pixel(&self, col: i64, row: i64) -> GeoPoint {
        self.unproject((col as f64 + 0.5) * self.meters_per_pixel, (row as f64 + 0.5) * self.meters_per_pixel)
    }

    pub fn in_range(&self, col: i64, row: i64) -> bool {
        let w = self.width as i64;
        (0..w).contains(&col) && (0..w).contains(&row)
    }

    /// Linear index of an in-range cell.
    pub fn cell_index(&self, col: i64, row: i64) -> Option<usize> {
        self.in_range(col, row).then(|| row as usize * self.width as usize + col as usize)
    }

    pub fn cell_of_index(&self, idx: usize) -> (i64, i64) {
        let w = self.width as usize;
        ((idx % w) as i64, (idx / w) as i64)
    }

    /// Same window within `tol` on origin degrees and pixel size.
    pub fn matches(&self, other: &Georef, tol: f64) -> bool {
        self.width == other.width
            && (self.origin.lon - other.origin.lon).abs() <= tol
            && (self.origin.lat - other.origin.lat).abs() <= tol
            && (self.meters_per_pixel - other.meters_per_pixel).abs() <= tol
    }
}

/// Square window around the trajectory: its bounding box grown by
/// `buffer_m` on every side, then padded to a square about its center.
pub fn make_georef(traj: &CellularTrajectory, buffer_m: f64, width: u32) -> Result<Georef, RasterError> {
    if width < MIN_WIDTH {
        return Err(RasterError::WidthTooSmall(width));
    }
    if !(buffer_m >= 0.0 && buffer_m.is_finite()) {
        return Err(RasterError::BadBuffer(buffer_m));
    }
    let (mut min_lon, mut min_lat, mut max_lon, mut max_lat) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for s in traj.samples() {
        min_lon = min_lon.min(s.pos.lon);
        max_lon = max_lon.max(s.pos.lon);
        min_lat = min_lat.min(s.pos.lat);
        max_lat = max_lat.max(s.pos.lat);
    }
    let center = GeoPoint::new((min_lon + max_lon) / 2.0, (min_lat + max_lat) / 2.0);
    let m_per_deg_lon = M_PER_DEG_LAT * center.lat.to_radians().cos();
    let ew = (max_lon - min_lon) * m_per_deg_lon;
    let ns = (max_lat - min_lat) * M_PER_DEG_LAT;
    let side = ew.max(ns) + 2.0 * buffer_m;
    if !(side > 0.0) {
        return Err(RasterError::DegenerateWindow(traj.traj_id().to_string()));
    }
    let half = side / 2.0;
    let origin = GeoPoint::new(center.lon - half / m_per_deg_lon, center.lat - half / M_PER_DEG_LAT);
    Georef::new(origin, side / width as f64, width)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Trajectory,
    Road,
    Mask,
    GtPath,
}

impl Channel {
    pub fn name(self) -> &'static str {
        match self {
            Channel::Trajectory => "trajectory",
            Channel::Road => "road",
            Channel::Mask => "mask",
            Channel::GtPath => "gt_path",
        }
    }

    pub fn is_binary(self) -> bool {
        !matches!(self, Channel::Trajectory)
    }
}

/// One channel of a rasterized scene. Values live in `[0, 1]`; binary
/// channels hold only 0 and 1. Cells are stored row-major, row 0 south.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelGrid {
    pub georef: Georef,
    pub channel: Channel,
    pub traj_id: String,
    /// Trajectory point count behind a trajectory channel, 0 otherwise.
    pub n_points: usize,
    values: Vec<f32>,
}

impl PixelGrid {
    pub fn zeros(georef: Georef, channel: Channel) -> Self {
        Self { georef, channel, traj_id: String::new(), n_points: 0, values: vec![0.0; georef.cell_count()] }
    }

    pub fn width(&self) -> u32 {
        self.georef.width
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, col: i64, row: i64) -> f32 {
        self.georef.cell_index(col, row).map_or(0.0, |i| self.values[i])
    }

    /// Whether an in-range cell is nonzero; out-of-range cells are unset.
    pub fn is_set(&self, col: i64, row: i64) -> bool {
        self.get(col, row) > 0.0
    }

    pub fn set(&mut self, col: i64, row: i64, v: f32) {
        if let Some(i) = self.georef.cell_index(col, row) {
            self.values[i] = v;
        }
    }

    pub fn set_index(&mut self, idx: usize, v: f32) {
        self.values[idx] = v;
    }

    pub fn count_nonzero(&self) -> usize {
        self.values.iter().filter(|&&v| v > 0.0).count()
    }

    pub fn nonzero_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.values.iter().enumerate().filter(|(_, &v)| v > 0.0).map(|(i, _)| i)
    }

    pub fn with_channel(mut self, channel: Channel) -> Self {
        self.channel = channel;
        self
    }
}

/// Trajectory raster plus the number of points that fell outside the window.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRaster {
    pub grid: PixelGrid,
    pub skipped: usize,
}

/// Mark the cell of the i-th point (1-based) with `i/|T|`. A cell shared by
/// several points keeps the largest index.
pub fn rasterize_trajectory(traj: &CellularTrajectory, g: &Georef) -> Result<TrajectoryRaster, RasterError> {
    let n = traj.len();
    let mut grid = PixelGrid::zeros(*g, Channel::Trajectory);
    grid.traj_id = traj.traj_id().to_string();
    grid.n_points = n;
    let mut skipped = 0;
    for (i, s) in traj.samples().iter().enumerate() {
        let (c, r) = g.to_pixel(s.pos);
        match g.cell_index(c, r) {
            // later points overwrite, so the largest index wins
            Some(idx) => grid.values[idx] = (i + 1) as f32 / n as f32,
            None => skipped += 1,
        }
    }
    if skipped == n {
        return Err(RasterError::AllPointsOutside(n));
    }
    Ok(TrajectoryRaster { grid, skipped })
}

/// Road raster plus a cell → edge reverse index (CSR layout).
#[derive(Debug, Clone, PartialEq)]
pub struct RoadRaster {
    pub grid: PixelGrid,
    /// Edges with at least one endpoint inside the window, ascending.
    pub edges: Vec<usize>,
    offsets: Vec<u32>,
    cell_edges: Vec<u32>,
}

impl RoadRaster {
    /// Edges whose rasterized line crosses cell `idx`, ascending.
    pub fn edges_at(&self, idx: usize) -> &[u32] {
        &self.cell_edges[self.offsets[idx] as usize..self.offsets[idx + 1] as usize]
    }
}

/// Integer Bresenham line between two cells, inclusive, calling `visit` on
/// every cell (in or out of range).
pub fn bresenham(c0: i64, r0: i64, c1: i64, r1: i64, mut visit: impl FnMut(i64, i64)) {
    let dx = (c1 - c0).abs();
    let dy = -(r1 - r0).abs();
    let sx = if c0 < c1 { 1 } else { -1 };
    let sy = if r0 < r1 { 1 } else { -1 };
    let (mut c, mut r, mut err) = (c0, r0, dx + dy);
    loop {
        visit(c, r);
        if c == c1 && r == r1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            c += sx;
        }
        if e2 <= dx {
            err += dx;
            r += sy;
        }
    }
}

fn rasterize_edges(net: &RoadNetwork, g: &Georef, edges: impl Iterator<Item = usize>, channel: Channel) -> RoadRaster {
    let mut grid = PixelGrid::zeros(*g, channel);
    let mut pairs: Vec<(u32, u32)> = Vec::new();
    let mut kept = Vec::new();
    let w = g.width as i64;
    for e in edges {
        let (c0, r0) = g.to_pixel(net.from_pos(e));
        let (c1, r1) = g.to_pixel(net.to_pos(e));
        if !g.in_range(c0, r0) && !g.in_range(c1, r1) {
            continue;
        }
        kept.push(e);
        bresenham(c0, r0, c1, r1, |c, r| {
            if (0..w).contains(&c) && (0..w).contains(&r) {
                let idx = (r * w + c) as usize;
                grid.values[idx] = 1.0;
                pairs.push((idx as u32, e as u32));
            }
        });
    }
    pairs.sort_unstable();
    pairs.dedup();
    let mut offsets = vec![0u32; g.cell_count() + 1];
    for &(cell, _) in &pairs {
        offsets[cell as usize + 1] += 1;
    }
    for i in 0..g.cell_count() {
        offsets[i + 1] += offsets[i];
    }
    let cell_edges = pairs.into_iter().map(|(_, e)| e).collect();
    RoadRaster { grid, edges: kept, offsets, cell_edges }
}

/// Rasterize every edge with an endpoint in the window.
pub fn rasterize_roads(net: &RoadNetwork, g: &Georef) -> RoadRaster {
    rasterize_edges(net, g, 0..net.edge_count(), Channel::Road)
}

/// Rasterize the distinct edges of a path.
pub fn rasterize_path(path: &[usize], net: &RoadNetwork, g: &Georef) -> PixelGrid {
    let mut uniq: Vec<usize> = path.to_vec();
    uniq.sort_unstable();
    uniq.dedup();
    rasterize_edges(net, g, uniq.into_iter(), Channel::GtPath).grid
}

/// `value → round(value·255)`.
pub fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Inverse of [`quantize`] for a channel; binary channels threshold at 128.
pub fn dequantize(b: u8, channel: Channel) -> f32 {
    if channel.is_binary() {
        if b >= 128 {
            1.0
        } else {
            0.0
        }
    } else {
        b as f32 / 255.0
    }
}

/// JSON sidecar written next to every grid file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub origin_lon: f64,
    pub origin_lat: f64,
    pub meters_per_pixel: f64,
    pub width: u32,
    pub channel: Channel,
    pub traj_id: String,
    pub n_points: usize,
}

impl Sidecar {
    pub fn of(grid: &PixelGrid) -> Self {
        Self {
            origin_lon: grid.georef.origin.lon,
            origin_lat: grid.georef.origin.lat,
            meters_per_pixel: grid.georef.meters_per_pixel,
            width: grid.georef.width,
            channel: grid.channel,
            traj_id: grid.traj_id.clone(),
            n_points: grid.n_points,
        }
    }

    pub fn georef(&self) -> Georef {
        Georef { origin: GeoPoint::new(self.origin_lon, self.origin_lat), meters_per_pixel: self.meters_per_pixel, width: self.width }
    }
}

/// `<dir>/<stem>.pgm` → `<dir>/<stem>.georef.json`.
pub fn sidecar_path(pgm_path: &Path) -> PathBuf {
    pgm_path.with_extension("georef.json")
}

/// Encode a grid as binary PGM bytes (north row first).
pub fn encode_pgm(grid: &PixelGrid) -> Vec<u8> {
    let w = grid.width() as usize;
    let mut out = format!("P5\n{w} {w}\n255\n").into_bytes();
    out.reserve(w * w);
    for file_row in 0..w {
        let row = w - 1 - file_row;
        out.extend(grid.values[row * w..(row + 1) * w].iter().map(|&v| quantize(v)));
    }
    out
}

/// Write `<name>.pgm` and its sidecar.
pub fn write_grid(grid: &PixelGrid, pgm_path: &Path) -> Result<(), RasterError> {
    fs::write(pgm_path, encode_pgm(grid)).map_err(|source| RasterError::Io { path: pgm_path.to_path_buf(), source })?;
    let side = sidecar_path(pgm_path);
    let json = serde_json::to_string_pretty(&Sidecar::of(grid)).expect("sidecar serializes");
    fs::write(&side, json + "\n").map_err(|source| RasterError::Io { path: side.clone(), source })
}

/// Read a grid written by [`write_grid`].
pub fn read_grid(pgm_path: &Path) -> Result<PixelGrid, RasterError> {
    read_grid_with_sidecar(pgm_path, &sidecar_path(pgm_path))
}

pub fn read_sidecar(path: &Path) -> Result<Sidecar, RasterError> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(RasterError::MissingSidecar { path: path.to_path_buf() })
        }
        Err(source) => return Err(RasterError::Io { path: path.to_path_buf(), source }),
    };
    serde_json::from_str(&text).map_err(|source| RasterError::BadSidecar { path: path.to_path_buf(), source })
}

pub fn read_grid_with_sidecar(pgm_path: &Path, sidecar: &Path) -> Result<PixelGrid, RasterError> {
    let meta = read_sidecar(sidecar)?;
    let bytes = fs::read(pgm_path).map_err(|source| RasterError::Io { path: pgm_path.to_path_buf(), source })?;
    let (w, h, pixels) = decode_pgm(&bytes, pgm_path)?;
    if w != meta.width as usize || h != meta.width as usize {
        return Err(RasterError::BadHeader {
            path: pgm_path.to_path_buf(),
            message: format!("image is {w}x{h} but sidecar says width {}", meta.width),
        });
    }
    let georef = Georef::new(meta.georef().origin, meta.meters_per_pixel, meta.width)?;
    let mut grid = PixelGrid::zeros(georef, meta.channel);
    grid.traj_id = meta.traj_id;
    grid.n_points = meta.n_points;
    for file_row in 0..h {
        let row = h - 1 - file_row;
        for col in 0..w {
            grid.values[row * w + col] = dequantize(pixels[file_row * w + col], meta.channel);
        }
    }
    Ok(grid)
}

/// Parse a `P5` image with maxval 255, returning `(width, height, pixels)`.
pub fn decode_pgm<'a>(bytes: &'a [u8], path: &Path) -> Result<(usize, usize, &'a [u8]), RasterError> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(RasterError::BadMagic { path: path.to_path_buf() });
    }
    let bad = |message: String| RasterError::BadHeader { path: path.to_path_buf(), message };
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for (k, slot) in fields.iter_mut().enumerate() {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        *slot = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad(format!("header field {k} is not a number")))?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(bad("missing whitespace after maxval".into()));
    }
    pos += 1;
    let [w, h, maxval] = fields;
    if maxval != 255 {
        return Err(bad(format!("maxval {maxval} unsupported")));
    }
    let pixels = &bytes[pos..];
    if pixels.len() != w * h {
        return Err(RasterError::SizeMismatch { path: path.to_path_buf(), expected: w * h, found: pixels.len() });
    }
    Ok((w, h, pixels))
}

/// Distinct in-window cells occupied by trajectory points.
pub fn occupied_cells(traj: &CellularTrajectory, g: &Georef) -> HashSet<usize> {
    traj.samples().iter().filter_map(|s| {
        let (c, r) = g.to_pixel(s.pos);
        g.cell_index(c, r)
    }).collect()
}
