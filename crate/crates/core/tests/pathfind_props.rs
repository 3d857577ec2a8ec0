mod common;

use common::{random_candidates, random_mask, random_network, random_query};
use pixmatch::pathfind::{
    brute_force_search, candidate_set, constrained_search, deviation_cost, deviation_cost_um, CandidateSet, SearchError,
    SearchOptions,
};
use proptest::prelude::*;

fn unpruned() -> SearchOptions {
    SearchOptions { prune: false, ..SearchOptions::default() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn matches_exhaustive_enumeration(seed in any::<u64>()) {
        let net = random_network(seed, 40);
        let set = random_candidates(&net, seed);
        let (s, e, budget) = random_query(&net, seed);
        let fast = constrained_search(&net, &set, s, e, budget, SearchOptions::default());
        let slow = brute_force_search(&net, &set, s, e, budget, net.edge_count());
        match (fast, slow) {
            (Ok(a), Ok(b)) => {
                prop_assert_eq!((a.cost_um, a.length_um), (b.cost_um, b.length_um));
                prop_assert_eq!(a.edges, b.edges);
            }
            (Err(SearchError::NoFeasiblePath { min_achievable_cost_m: a, .. }),
             Err(SearchError::NoFeasiblePath { min_achievable_cost_m: b, .. })) => prop_assert_eq!(a, b),
            (a, b) => prop_assert_eq!(a.map_err(|e| e.kind()).map(|p| p.edges), b.map_err(|e| e.kind()).map(|p| p.edges)),
        }
    }

    #[test]
    fn pruning_does_not_change_the_optimum(seed in any::<u64>()) {
        let net = random_network(seed, 40);
        let set = random_candidates(&net, seed);
        let (s, e, budget) = random_query(&net, seed);
        let a = constrained_search(&net, &set, s, e, budget, SearchOptions::default());
        let b = constrained_search(&net, &set, s, e, budget, unpruned());
        prop_assert_eq!(a.map(|p| (p.cost_um, p.length_um)).map_err(|e| e.kind()), b.map(|p| (p.cost_um, p.length_um)).map_err(|e| e.kind()));
    }

    #[test]
    fn found_paths_are_valid_and_recompute(seed in any::<u64>()) {
        let net = random_network(seed, 40);
        let set = random_candidates(&net, seed);
        let (s, e, budget) = random_query(&net, seed);
        if let Ok(p) = constrained_search(&net, &set, s, e, budget, SearchOptions::default()) {
            prop_assert_eq!(p.edges.first(), Some(&s));
            prop_assert_eq!(p.edges.last(), Some(&e));
            prop_assert!(net.is_connected_path(&p.edges));
            prop_assert!(p.cost_m() <= budget);
            prop_assert_eq!(deviation_cost_um(&p.edges, &set, &net).unwrap(), p.cost_um);
            prop_assert_eq!(net.path_length_um(&p.edges), p.length_um);
        }
    }

    #[test]
    fn larger_candidate_set_never_costs_more(seed in any::<u64>(), extra in any::<u64>()) {
        let net = random_network(seed, 40);
        let set = random_candidates(&net, seed);
        let grown = CandidateSet::from_edges(&net, set.edges().iter().copied().chain((0..net.edge_count()).filter(|i| (extra >> (i % 64)) & 1 == 1)));
        let (s, e, budget) = random_query(&net, seed);
        if let Ok(small) = constrained_search(&net, &set, s, e, budget, SearchOptions::default()) {
            let big = constrained_search(&net, &grown, s, e, budget, SearchOptions::default()).expect("still feasible");
            prop_assert!(big.cost_um <= small.cost_um);
        }
    }

    #[test]
    fn larger_budget_never_costs_more(seed in any::<u64>()) {
        let net = random_network(seed, 40);
        let set = random_candidates(&net, seed);
        let (s, e, budget) = random_query(&net, seed);
        if let Ok(tight) = constrained_search(&net, &set, s, e, budget, SearchOptions::default()) {
            let loose = constrained_search(&net, &set, s, e, budget + 500.0, SearchOptions::default()).unwrap();
            prop_assert!((loose.cost_um, loose.length_um) <= (tight.cost_um, tight.length_um));
        }
    }

    #[test]
    fn deviation_cost_is_the_off_set_length(seed in any::<u64>(), len in 1usize..30) {
        let net = random_network(seed, 40);
        let set = random_candidates(&net, seed);
        // walk successors to get a connected path
        let mut path = vec![(seed as usize) % net.edge_count()];
        let mut k = seed;
        while path.len() < len {
            let succ = net.successor_indices(*path.last().unwrap());
            if succ.is_empty() { break; }
            k = k.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            path.push(succ[(k >> 33) as usize % succ.len()]);
        }
        let oracle: f64 = path.iter().filter(|&&e| !set.contains(e)).map(|&e| net.edge(e).length_m).sum();
        prop_assert!((deviation_cost(&path, &set, &net).unwrap() - oracle).abs() <= 1e-6 * path.len() as f64);
        let all_in = CandidateSet::from_edges(&net, 0..net.edge_count());
        prop_assert_eq!(deviation_cost_um(&path, &all_in, &net).unwrap(), 0);
    }
}

#[test]
fn candidate_set_matches_cell_scan_on_100_masks() {
    for seed in 0..100u64 {
        let net = random_network(seed, 40);
        let mask = random_mask(seed + 1000, 0.2 + 0.7 * (seed as f64 / 100.0));
        let g = mask.georef;
        let set_cells: Vec<(i64, i64)> = mask.nonzero_indices().map(|i| g.cell_of_index(i)).collect();
        let hit = |p| set_cells.contains(&g.to_pixel(p));
        let expected: Vec<usize> = (0..net.edge_count()).filter(|&e| hit(net.from_pos(e)) && hit(net.to_pos(e))).collect();
        match candidate_set(&mask, &net) {
            Ok(set) => assert_eq!(set.edges(), expected.as_slice(), "seed {seed}"),
            Err(e) => {
                assert!(expected.is_empty());
                assert_eq!(e.kind(), SearchError::EmptyCandidateSet.kind());
            }
        }
    }
}
