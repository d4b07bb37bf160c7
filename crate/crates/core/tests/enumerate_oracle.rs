use std::collections::BTreeSet;

use ncbf_core::boundprop::HyperCube;
use ncbf_core::dynamics::builtin;
use ncbf_core::enumerate::{build_atlas, EnumConfig};
use ncbf_core::network::builtin_network;
use ncbf_core::oracle::{boundary_regions_by_adjacency, boundary_samples, random_network};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn state_box(name: &str) -> HyperCube {
    let sys = builtin(name).unwrap();
    HyperCube::from_intervals(&sys.box_intervals())
}

#[test]
fn darboux_atlas_matches_adjacency_walk() {
    let net = builtin_network("darboux_fixture").unwrap();
    let bx = state_box("darboux");
    let atlas = build_atlas(&net, &bx, &EnumConfig::default()).unwrap();
    assert!(atlas.is_complete());
    let found: Vec<_> = atlas.patterns.iter().map(|p| p.pattern.clone()).collect();
    let oracle = boundary_regions_by_adjacency(&net, &bx).unwrap();
    assert!(found.len() >= 4, "{}", found.len());
    assert_eq!(found, oracle);
}

#[test]
fn sampled_boundary_patterns_are_enumerated() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..10 {
        let width = rng.gen_range(2..=12);
        let net = random_network(&mut rng, 2, &[width]);
        let bx = HyperCube::new(vec![-2.0, -2.0], vec![2.0, 2.0]).unwrap();
        let atlas = build_atlas(&net, &bx, &EnumConfig::default()).unwrap();
        let found: BTreeSet<_> = atlas.patterns.iter().map(|p| p.pattern.clone()).collect();
        for (x, p) in boundary_samples(&net, &bx, 100, 500).unwrap() {
            assert!(found.contains(&p), "pattern {p} at {x:?} missing");
        }
        let walk: BTreeSet<_> = boundary_regions_by_adjacency(&net, &bx).unwrap().into_iter().collect();
        assert_eq!(found, walk);
    }
}
