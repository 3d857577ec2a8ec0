#![allow(dead_code)]

use pixmatch::pathfind::{candidate_set, CandidateSet};
use pixmatch::raster::{Channel, Georef, PixelGrid};
use pixmatch::roadnet::{EdgeSpec, GeoPoint, NetworkBuilder, RoadNetwork};
use pixmatch::trajgen::seeded_rng;
use rand::Rng;

pub const ORIGIN: GeoPoint = GeoPoint::new(120.10, 30.25);

/// Random street-like network: a jittered lattice of 2..=5 by 2..=5 nodes
/// with a random subset of the directed neighbor links, at most
/// `max_edges` of them. Lengths are multiples of 50 m so that ties in cost
/// and length actually happen.
pub fn random_network(seed: u64, max_edges: usize) -> RoadNetwork {
    let mut rng = seeded_rng(seed);
    let (rows, cols) = (rng.random_range(2..=5usize), rng.random_range(2..=5usize));
    let keep = rng.random_range(0.4..0.9);
    let mut b = NetworkBuilder::new();
    for r in 0..rows {
        for c in 0..cols {
            let lon = ORIGIN.lon + 0.002 * c as f64 + rng.random_range(0.0..0.0015);
            let lat = ORIGIN.lat + 0.002 * r as f64 + rng.random_range(0.0..0.0015);
            b = b.node(format!("n{}", r * cols + c), lon, lat);
        }
    }
    let mut links = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let a = r * cols + c;
            if c + 1 < cols {
                links.extend([(a, a + 1), (a + 1, a)]);
            }
            if r + 1 < rows {
                links.extend([(a, a + cols), (a + cols, a)]);
            }
        }
    }
    let mut chosen: Vec<(usize, usize)> = links.into_iter().filter(|_| rng.random_bool(keep)).collect();
    while chosen.len() > max_edges {
        chosen.swap_remove(rng.random_range(0..chosen.len()));
    }
    if chosen.is_empty() {
        chosen.push((0, 1));
    }
    for (j, (from, to)) in chosen.into_iter().enumerate() {
        let len = 50.0 * rng.random_range(1..=8u32) as f64;
        b = b.edge(EdgeSpec::new(format!("e{j}"), format!("n{from}"), format!("n{to}")).with_geometry_length(len));
    }
    b.build().expect("valid random network")
}

/// Window of 32×32 cells of 40 m covering the random networks.
pub fn window() -> Georef {
    Georef::new(GeoPoint::new(ORIGIN.lon - 0.001, ORIGIN.lat - 0.001), 40.0, 32).unwrap()
}

/// Mask with each cell set independently with probability `density`.
pub fn random_mask(seed: u64, density: f64) -> PixelGrid {
    let mut rng = seeded_rng(seed);
    let mut mask = PixelGrid::zeros(window(), Channel::Mask);
    for idx in 0..mask.values().len() {
        if rng.random_bool(density) {
            mask.set_index(idx, 1.0);
        }
    }
    mask
}

/// Candidate set from a random mask, or a random edge subset when the mask
/// happens to cover no edge.
pub fn random_candidates(net: &RoadNetwork, seed: u64) -> CandidateSet {
    let mut rng = seeded_rng(seed ^ 0x5eed);
    let density = rng.random_range(0.3..0.95);
    match candidate_set(&random_mask(seed, density), net) {
        Ok(s) => s,
        Err(_) => CandidateSet::from_edges(net, (0..net.edge_count()).filter(|_| rng.random_bool(0.5))),
    }
}

/// Start edge, end edge and budget in meters. The end edge is usually
/// reachable from the start and often far from it.
pub fn random_query(net: &RoadNetwork, seed: u64) -> (usize, usize, f64) {
    let mut rng = seeded_rng(seed ^ 0xc0ffee);
    let start = rng.random_range(0..net.edge_count());
    let mut seen = vec![false; net.edge_count()];
    let mut order = vec![start];
    seen[start] = true;
    let mut i = 0;
    while i < order.len() {
        for &s in net.successor_indices(order[i]) {
            if !seen[s] {
                seen[s] = true;
                order.push(s);
            }
        }
        i += 1;
    }
    let end = if rng.random_bool(0.85) {
        // bias toward the far half of the breadth-first order
        let lo = order.len() / 2;
        order[rng.random_range(lo..order.len())]
    } else {
        rng.random_range(0..net.edge_count())
    };
    let budget = 50.0 * rng.random_range(0..=20u32) as f64;
    (start, end, budget)
}
