//! Structural invariants over random-action episodes at desk scale. The
//! acceptance run repeats the rollout check over a thousand episodes.

use std::collections::BTreeSet;

use explore_core::explore_env::{EnvConfig, ExploreEnv, Observation};
use explore_core::geometry::segment_cells;
use explore_core::gridmap::{Occupancy, Terrain};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

fn check_observation(env: &ExploreEnv, obs: &Observation, visited: &BTreeSet<usize>) {
    let g = &obs.graph;
    assert_eq!(g.node_ids[g.current as usize], env.current());
    for (d, f) in g.features.iter().enumerate() {
        assert!(
            f.iter().all(|v| (0.0..=1.0).contains(v)),
            "feature out of range: {f:?}"
        );
        let id = g.node_ids[d];
        assert_eq!(
            f[3] == 1.0,
            visited.contains(&id),
            "visited flag of node {id}"
        );
        assert!(f[3] == 0.0 || f[3] == 1.0);
        assert!(env.graph().is_active(id));
    }
    assert_eq!(g.len(), env.graph().active_count());
    for d in 0..g.len() {
        for &e in g.neighbors(d) {
            assert!(env.graph().has_edge(g.node_ids[d], g.node_ids[e as usize]));
        }
    }
}

/// Returns the number of executed edges.
fn rollout(cfg: &EnvConfig, seed: u64) -> usize {
    let (mut env, mut obs) = ExploreEnv::reset(cfg, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut visited: BTreeSet<usize> = [env.current()].into();
    let mut active: Vec<bool> = (0..env.lattice().len())
        .map(|i| env.graph().is_active(i))
        .collect();
    check_observation(&env, &obs, &visited);
    let mut edges = 0;
    while !env.is_done() {
        let from = env.current();
        let action = rng.gen_range(0..obs.action_count());
        let to = obs.graph.node_ids[obs.neighbors()[action] as usize];
        let (a, b) = (env.lattice().point(from), env.lattice().point(to));
        // collision-free against what was known when the edge was chosen and
        // against the ground truth
        for c in segment_cells(a, b) {
            assert_eq!(
                env.partial().get(c),
                Occupancy::Free,
                "seed {seed}: edge {from}-{to} crosses {c:?}"
            );
            assert_eq!(env.truth().terrain(c), Terrain::Free);
        }
        let out = env.step(action).unwrap();
        edges += 1;
        assert_eq!(env.current(), to);
        assert!((out.info.r_c_len - a.distance(b)).abs() < 1e-9);
        visited.insert(to);
        for (i, was) in active.iter_mut().enumerate() {
            let now = env.graph().is_active(i);
            assert!(!*was || now, "seed {seed}: node {i} deactivated");
            *was = now;
        }
        obs = out.obs;
        check_observation(&env, &obs, &visited);
    }
    let t = env.trajectory();
    assert_eq!(t.viewpoints.len(), edges + 1);
    edges
}

#[test]
fn random_rollouts_keep_graph_invariants() {
    let cfg = EnvConfig::desk();
    let edges: usize = (0..100u64)
        .into_par_iter()
        .map(|s| rollout(&cfg, 0x5151_0000 + s))
        .sum();
    assert!(edges > 100 * 10, "{edges} edges");
}
