//! Calibration masks: the road pixels a trip plausibly used.
//!
//! The deterministic calibrator keeps road cells within a pixel radius of
//! any occupied trajectory cell. Masks produced elsewhere (for example by a
//! trained model) are loaded from the raster file format and clipped to the
//! road grid.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::raster::{read_grid_with_sidecar, Channel, Georef, PixelGrid, RasterError};

/// Absolute tolerance for comparing georefs of grids that must align.
pub const GEOREF_TOLERANCE: f64 = 1e-9;

/// Smallest error scale the default radius accounts for, in meters.
pub const MIN_ERROR_SCALE_M: f64 = 100.0;

#[derive(Debug, thiserror::Error)]
pub enum CalibError {
    #[error("georef mismatch: {ours:?} vs {theirs:?}")]
    GeorefMismatch { ours: Georef, theirs: Georef },
    #[error("expected a {expected} channel, found {found}")]
    ChannelMismatch { expected: &'static str, found: &'static str },
    #[error("radius must be at least 1 pixel")]
    InvalidRadius,
    #[error("road grid has no road cells")]
    EmptyRoadGrid,
    #[error("trajectory grid has no occupied cells")]
    EmptyTrajectory,
    #[error("calibration mask is empty{}", min_radius.map(|r| format!(" (radius {r} px would succeed)")).unwrap_or_default())]
    EmptyMask { min_radius: Option<u32> },
    #[error(transparent)]
    Raster(#[from] RasterError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskSource {
    Deterministic,
    External,
}

/// Binary mask restricted to road cells, never empty.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationMask {
    pub grid: PixelGrid,
    pub source: MaskSource,
    /// Cells dropped because they were not on the road grid.
    pub dropped: usize,
}

/// Exact squared Euclidean distance (in pixels²) from every cell to the
/// nearest feature cell, by the separable lower-envelope transform.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceField {
    width: usize,
    sq: Vec<f64>,
}

impl DistanceField {
    /// Distance field of the nonzero cells of `grid`.
    pub fn of(grid: &PixelGrid) -> Self {
        let w = grid.width() as usize;
        let f: Vec<f64> = grid.values().iter().map(|&v| if v > 0.0 { 0.0 } else { f64::INFINITY }).collect();
        Self::from_features(w, f)
    }

    fn from_features(w: usize, mut f: Vec<f64>) -> Self {
        let mut line = vec![0.0; w];
        let mut out = vec![0.0; w];
        let mut scratch = Scratch::new(w);
        for col in 0..w {
            for row in 0..w {
                line[row] = f[row * w + col];
            }
            edt_1d(&line, &mut out, &mut scratch);
            for row in 0..w {
                f[row * w + col] = out[row];
            }
        }
        for row in 0..w {
            line.copy_from_slice(&f[row * w..(row + 1) * w]);
            edt_1d(&line, &mut out, &mut scratch);
            f[row * w..(row + 1) * w].copy_from_slice(&out);
        }
        Self { width: w, sq: f }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Squared distance at a linear cell index; infinite without features.
    pub fn distance_sq(&self, idx: usize) -> f64 {
        self.sq[idx]
    }

    pub fn distance(&self, col: i64, row: i64) -> Option<f64> {
        let w = self.width as i64;
        ((0..w).contains(&col) && (0..w).contains(&row)).then(|| self.sq[(row * w + col) as usize].sqrt())
    }
}

struct Scratch {
    v: Vec<usize>,
    z: Vec<f64>,
}

impl Scratch {
    fn new(n: usize) -> Self {
        Self { v: vec![0; n], z: vec![0.0; n + 1] }
    }
}

/// One-dimensional squared distance transform of sampled function `f`
/// (0 at features, +∞ elsewhere, or partial results of a previous pass).
fn edt_1d(f: &[f64], d: &mut [f64], s: &mut Scratch) {
    let n = f.len();
    let first = match f.iter().position(|x| x.is_finite()) {
        Some(q) => q,
        None => {
            d.fill(f64::INFINITY);
            return;
        }
    };
    let (v, z) = (&mut s.v, &mut s.z);
    let mut k = 0usize;
    v[0] = first;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in first + 1..n {
        if !f[q].is_finite() {
            continue;
        }
        let qf = q as f64;
        let intersect = |p: usize| {
            let pf = p as f64;
            ((f[q] + qf * qf) - (f[p] + pf * pf)) / (2.0 * qf - 2.0 * pf)
        };
        let mut sep = intersect(v[k]);
        // z[0] is -inf, so k never underflows
        while sep <= z[k] {
            k -= 1;
            sep = intersect(v[k]);
        }
        k += 1;
        v[k] = q;
        z[k] = sep;
        z[k + 1] = f64::INFINITY;
    }
    let mut k = 0;
    for (q, out) in d.iter_mut().enumerate() {
        let qf = q as f64;
        while z[k + 1] < qf {
            k += 1;
        }
        let p = v[k] as f64;
        *out = (qf - p) * (qf - p) + f[v[k]];
    }
}

fn check_georef(a: &Georef, b: &Georef) -> Result<(), CalibError> {
    if a.matches(b, GEOREF_TOLERANCE) {
        Ok(())
    } else {
        Err(CalibError::GeorefMismatch { ours: *a, theirs: *b })
    }
}

/// Road cells within `radius_px` (Euclidean, inclusive) of any occupied
/// trajectory cell.
pub fn calibrate_deterministic(
    traj_grid: &PixelGrid,
    road_grid: &PixelGrid,
    radius_px: u32,
) -> Result<CalibrationMask, CalibError> {
    check_georef(&road_grid.georef, &traj_grid.georef)?;
    if radius_px < 1 {
        return Err(CalibError::InvalidRadius);
    }
    if road_grid.count_nonzero() == 0 {
        return Err(CalibError::EmptyRoadGrid);
    }
    let field = DistanceField::of(traj_grid);
    if field.sq.iter().all(|d| d.is_infinite()) {
        return Err(CalibError::EmptyTrajectory);
    }
    let r2 = (radius_px as f64) * (radius_px as f64);
    let mut grid = PixelGrid::zeros(road_grid.georef, Channel::Mask);
    grid.traj_id = traj_grid.traj_id.clone();
    let mut nearest = f64::INFINITY;
    let mut any = false;
    for idx in road_grid.nonzero_indices() {
        let d2 = field.distance_sq(idx);
        if d2 <= r2 {
            grid.set_index(idx, 1.0);
            any = true;
        }
        nearest = nearest.min(d2);
    }
    if !any {
        return Err(CalibError::EmptyMask { min_radius: Some(nearest.sqrt().ceil() as u32) });
    }
    Ok(CalibrationMask { grid, source: MaskSource::Deterministic, dropped: 0 })
}

/// Load an externally produced mask and clip it to `road_grid`.
pub fn load_external_mask(pgm_path: &Path, sidecar_path: &Path, road_grid: &PixelGrid) -> Result<CalibrationMask, CalibError> {
    let loaded = read_grid_with_sidecar(pgm_path, sidecar_path)?;
    external_mask(loaded, road_grid)
}

/// Clip an in-memory external mask to `road_grid`.
pub fn external_mask(mut grid: PixelGrid, road_grid: &PixelGrid) -> Result<CalibrationMask, CalibError> {
    if grid.channel != Channel::Mask {
        return Err(CalibError::ChannelMismatch { expected: Channel::Mask.name(), found: grid.channel.name() });
    }
    check_georef(&road_grid.georef, &grid.georef)?;
    let mut dropped = 0;
    let mut kept = 0;
    for (idx, &road) in road_grid.values().iter().enumerate() {
        if grid.values()[idx] > 0.0 {
            if road > 0.0 {
                grid.set_index(idx, 1.0);
                kept += 1;
            } else {
                grid.set_index(idx, 0.0);
                dropped += 1;
            }
        }
    }
    if kept == 0 {
        return Err(CalibError::EmptyMask { min_radius: None });
    }
    Ok(CalibrationMask { grid, source: MaskSource::External, dropped })
}

/// `ceil(max(noise, 100 m) / meters_per_pixel)`, clamped to `[1, width/2]`.
pub fn default_radius(noise_sigma_m: f64, g: &Georef) -> u32 {
    let scale = noise_sigma_m.max(MIN_ERROR_SCALE_M);
    let r = (scale / g.meters_per_pixel).ceil();
    let max = (g.width / 2).max(1);
    if r.is_nan() || r < 1.0 {
        1
    } else {
        (r.min(max as f64)) as u32
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::MIN_WIDTH;
    use crate::roadnet::GeoPoint;
    use crate::trajgen::seeded_rng;
    use rand::Rng;

    fn georef(w: u32) -> Georef {
        Georef::new(GeoPoint::new(120.0, 30.0), 8.93, w).unwrap()
    }

    fn grid(w: u32, ch: Channel, cells: &[(i64, i64)]) -> PixelGrid {
        let mut g = PixelGrid::zeros(georef(w), ch);
        for &(c, r) in cells {
            g.set(c, r, 1.0);
        }
        g
    }

    fn brute_mask(traj: &PixelGrid, road: &PixelGrid, radius: u32) -> Vec<usize> {
        let g = &traj.georef;
        let tcells: Vec<(i64, i64)> = traj.nonzero_indices().map(|i| g.cell_of_index(i)).collect();
        road.nonzero_indices()
            .filter(|&i| {
                let (c, r) = g.cell_of_index(i);
                tcells.iter().any(|&(tc, tr)| ((c - tc).pow(2) + (r - tr).pow(2)) as f64 <= (radius as f64).powi(2))
            })
            .collect()
    }

    #[test]
    fn column_example() {
        let traj = grid(32, Channel::Trajectory, &[(10, 10)]);
        let road = grid(32, Channel::Road, &(0..32).map(|r| (12, r)).collect::<Vec<_>>());
        let m = calibrate_deterministic(&traj, &road, 2).unwrap();
        let cells: Vec<(i64, i64)> = m.grid.nonzero_indices().map(|i| m.grid.georef.cell_of_index(i)).collect();
        assert_eq!(cells, vec![(12, 10)]);
        assert_eq!(m.source, MaskSource::Deterministic);
    }

    #[test]
    fn saturating_radius_keeps_all_roads() {
        let mut rng = seeded_rng(5);
        let w = 40;
        let traj = grid(w, Channel::Trajectory, &[(3, 4)]);
        let cells: Vec<(i64, i64)> = (0..200).map(|_| (rng.random_range(0..40), rng.random_range(0..40))).collect();
        let road = grid(w, Channel::Road, &cells);
        let r = (w as f64 * 2f64.sqrt()).ceil() as u32;
        let m = calibrate_deterministic(&traj, &road, r).unwrap();
        assert_eq!(m.grid.values(), road.clone().with_channel(Channel::Mask).values());
    }

    #[test]
    fn random_instances_match_brute_force() {
        let mut rng = seeded_rng(11);
        for _ in 0..40 {
            let w = rng.random_range(MIN_WIDTH..48);
            let rand_cells = |rng: &mut rand_xoshiro::Xoshiro256PlusPlus, n: usize| -> Vec<(i64, i64)> {
                (0..n).map(|_| (rng.random_range(0..w as i64), rng.random_range(0..w as i64))).collect()
            };
            let tn = rng.random_range(1..8);
            let traj = grid(w, Channel::Trajectory, &rand_cells(&mut rng, tn));
            let road = grid(w, Channel::Road, &rand_cells(&mut rng, 150));
            let radius = rng.random_range(1..12);
            let expect = brute_mask(&traj, &road, radius);
            match calibrate_deterministic(&traj, &road, radius) {
                Ok(m) => assert_eq!(m.grid.nonzero_indices().collect::<Vec<_>>(), expect),
                Err(CalibError::EmptyMask { min_radius: Some(r) }) => {
                    assert!(expect.is_empty());
                    assert!(!brute_mask(&traj, &road, r).is_empty());
                    assert!(r == 1 || brute_mask(&traj, &road, r - 1).is_empty());
                }
                Err(e) => panic!("{e}"),
            }
        }
    }

    #[test]
    fn monotone_in_radius_and_value_blind() {
        let mut rng = seeded_rng(2);
        let w = 48;
        let cells: Vec<(i64, i64)> = (0..300).map(|_| (rng.random_range(0..48), rng.random_range(0..48))).collect();
        let road = grid(w, Channel::Road, &cells);
        let mut traj = grid(w, Channel::Trajectory, &[(5, 5), (20, 30), (40, 8)]);
        let mut prev: Vec<usize> = Vec::new();
        for r in 1..20 {
            let m = calibrate_deterministic(&traj, &road, r).unwrap();
            let cur: Vec<usize> = m.grid.nonzero_indices().collect();
            assert!(prev.iter().all(|c| cur.contains(c)));
            assert!(cur.iter().all(|&c| road.values()[c] > 0.0));
            prev = cur;
        }
        let before = calibrate_deterministic(&traj, &road, 7).unwrap();
        traj.set(5, 5, 0.25);
        traj.set(20, 30, 0.5);
        assert_eq!(calibrate_deterministic(&traj, &road, 7).unwrap().grid, before.grid);
    }

    #[test]
    fn error_paths() {
        let traj = grid(32, Channel::Trajectory, &[(1, 1)]);
        let empty_road = grid(32, Channel::Road, &[]);
        assert!(matches!(calibrate_deterministic(&traj, &empty_road, 3), Err(CalibError::EmptyRoadGrid)));
        let road = grid(32, Channel::Road, &[(30, 1)]);
        match calibrate_deterministic(&traj, &road, 3) {
            Err(CalibError::EmptyMask { min_radius: Some(29) }) => {}
            other => panic!("{other:?}"),
        }
        assert!(matches!(calibrate_deterministic(&traj, &road, 0), Err(CalibError::InvalidRadius)));
    }

    #[test]
    fn external_mask_clipping() {
        let dir = tempfile::tempdir().unwrap();
        let road_cells: Vec<(i64, i64)> = (0..20).map(|c| (c, 4)).collect();
        let road = grid(32, Channel::Road, &road_cells);

        let same = road.clone().with_channel(Channel::Mask);
        let p = dir.path().join("same.mask.pgm");
        crate::raster::write_grid(&same, &p).unwrap();
        let m = load_external_mask(&p, &crate::raster::sidecar_path(&p), &road).unwrap();
        assert_eq!(m.grid.values(), same.values());
        assert_eq!((m.dropped, m.source), (0, MaskSource::External));

        let mask_cells: Vec<(i64, i64)> = (0..7).map(|c| (c, 4)).chain([(1, 9), (2, 9), (3, 9)]).collect();
        let ten = grid(32, Channel::Mask, &mask_cells);
        let expect_kept = mask_cells.iter().filter(|c| road_cells.contains(c)).count();
        let p = dir.path().join("ten.mask.pgm");
        crate::raster::write_grid(&ten, &p).unwrap();
        let m = load_external_mask(&p, &crate::raster::sidecar_path(&p), &road).unwrap();
        assert_eq!((m.grid.count_nonzero(), m.dropped), (expect_kept, 3));
        assert_eq!(expect_kept, 7);

        let mut shifted = ten.clone();
        shifted.georef.meters_per_pixel = 8.94;
        let p = dir.path().join("off.mask.pgm");
        crate::raster::write_grid(&shifted, &p).unwrap();
        assert!(matches!(
            load_external_mask(&p, &crate::raster::sidecar_path(&p), &road),
            Err(CalibError::GeorefMismatch { .. })
        ));

        let off_road = grid(32, Channel::Mask, &[(1, 9)]);
        assert!(matches!(external_mask(off_road, &road), Err(CalibError::EmptyMask { min_radius: None })));
        assert!(matches!(external_mask(road.clone(), &road), Err(CalibError::ChannelMismatch { .. })));
    }

    #[test]
    fn default_radius_formula() {
        let g = georef(224);
        assert_eq!(default_radius(0.0, &g), 12);
        assert_eq!(default_radius(300.0, &g), 34);
        assert_eq!(default_radius(1e6, &g), 112);
    }

    #[test]
    fn distance_field_matches_brute_force() {
        let mut rng = seeded_rng(21);
        for _ in 0..30 {
            let w = rng.random_range(MIN_WIDTH..40);
            let n = rng.random_range(1..10);
            let cells: Vec<(i64, i64)> = (0..n).map(|_| (rng.random_range(0..w as i64), rng.random_range(0..w as i64))).collect();
            let field = DistanceField::of(&grid(w, Channel::Mask, &cells));
            for r in 0..w as i64 {
                for c in 0..w as i64 {
                    let brute = cells.iter().map(|&(x, y)| ((c - x).pow(2) + (r - y).pow(2)) as f64).fold(f64::INFINITY, f64::min);
                    assert_eq!(field.distance_sq((r * w as i64 + c) as usize), brute);
                }
            }
        }
    }
}
