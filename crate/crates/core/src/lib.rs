//! Map matching of cellular trajectories through a shared pixel space.
//!
//! The pipeline rasterizes a trajectory and the surrounding road network
//! onto one georeferenced grid, derives a calibration mask of road pixels
//! the trip plausibly used, turns the mask into a candidate road set, and
//! runs a cost-constrained label-setting search for a connected road
//! sequence.

pub mod calibrate;
pub mod evalkit;
pub mod io;
pub mod mixmath;
pub mod pathfind;
pub mod pipeline;
pub mod raster;
pub mod render;
pub mod roadnet;
pub mod trajgen;
