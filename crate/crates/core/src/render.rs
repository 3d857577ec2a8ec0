//! Color overlays of one scene: roads yellow, mask white, matched path
//! red, trajectory cyan shaded by visiting order. Output rows run north
//! first, like the grid files.

use crate::raster::PixelGrid;
use crate::roadnet::RoadNetwork;

pub const ROAD: [u8; 3] = [255, 215, 0];
pub const MASK: [u8; 3] = [255, 255, 255];
pub const PATH: [u8; 3] = [230, 30, 30];

/// Cyan whose brightness grows with the visiting order `v ∈ (0, 1]`.
pub fn trajectory_color(v: f32) -> [u8; 3] {
    let g = (60.0 + 195.0 * v.clamp(0.0, 1.0)).round() as u8;
    [0, g, g]
}

/// Layers of one scene; all present grids must share a width.
#[derive(Debug, Clone, Copy, Default)]
pub struct Layers<'a> {
    pub road: Option<&'a PixelGrid>,
    pub mask: Option<&'a PixelGrid>,
    pub path: Option<&'a PixelGrid>,
    pub trajectory: Option<&'a PixelGrid>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: u32,
    pub height: u32,
    /// Row-major, north row first.
    pub pixels: Vec<[u8; 3]>,
}

impl RgbImage {
    /// Binary PPM (`P6`).
    pub fn encode_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.pixels.iter().flatten());
        out
    }

    /// RGBA bytes with opaque alpha.
    pub fn to_rgba(&self) -> Vec<u8> {
        self.pixels.iter().flat_map(|p| [p[0], p[1], p[2], 255]).collect()
    }
}

/// Paint the layers bottom to top: road, mask, path, trajectory.
pub fn compose(width: u32, layers: Layers<'_>) -> RgbImage {
    let w = width as usize;
    let mut pixels = vec![[0u8; 3]; w * w];
    let mut paint = |grid: Option<&PixelGrid>, color: &dyn Fn(f32) -> [u8; 3]| {
        let Some(grid) = grid else { return };
        assert_eq!(grid.width(), width, "layer width mismatch");
        for idx in grid.nonzero_indices() {
            let (col, row) = (idx % w, idx / w);
            pixels[(w - 1 - row) * w + col] = color(grid.values()[idx]);
        }
    };
    paint(layers.road, &|_| ROAD);
    paint(layers.mask, &|_| MASK);
    paint(layers.path, &|_| PATH);
    paint(layers.trajectory, &trajectory_color);
    RgbImage { width, height: width, pixels }
}

/// Rasterize a matched path for the path layer.
pub fn path_layer(path: &[usize], net: &RoadNetwork, like: &PixelGrid) -> PixelGrid {
    crate::raster::rasterize_path(path, net, &like.georef)
}
