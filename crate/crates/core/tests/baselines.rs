//! Baseline planners against independent oracles, and the fairness of the
//! shared execution harness.

use std::sync::Arc;

use explore_core::baselines::{
    gain, grow_tree, nearest_frontier, run_in, run_planner, utility_frontier, Completion,
    GainParams, NbvParams, Planner, PlannerKind, Verdict,
};
use explore_core::explore_env::{EnvConfig, ExploreEnv};
use explore_core::frontier::line_of_sight;
use explore_core::geometry::Cell;
use explore_core::gridmap::{GroundTruthMap, Terrain};

fn small_cfg() -> EnvConfig {
    EnvConfig {
        width: 128,
        height: 96,
        node_count: 96,
        k: 8,
        step_budget: 200,
        ..EnvConfig::desk()
    }
}

/// All-pairs shortest path lengths (Floyd–Warshall) over the current graph.
fn floyd(env: &ExploreEnv) -> Vec<Vec<f64>> {
    let n = env.lattice().len();
    let mut d = vec![vec![f64::INFINITY; n]; n];
    for i in 0..n {
        if !env.graph().is_active(i) {
            continue;
        }
        d[i][i] = 0.0;
        for &j in env.graph().neighbors(i) {
            d[i][j] = env.lattice().point(i).distance(env.lattice().point(j));
        }
    }
    for m in 0..n {
        for i in 0..n {
            if d[i][m].is_infinite() {
                continue;
            }
            for j in 0..n {
                let via = d[i][m] + d[m][j];
                if via < d[i][j] {
                    d[i][j] = via;
                }
            }
        }
    }
    d
}

/// Reachable unvisited viewpoints with positive utility that are the
/// closest such viewpoint seeing some frontier cell.
fn frontier_adjacent(env: &ExploreEnv, d: &[Vec<f64>]) -> Vec<usize> {
    let cur = env.current();
    let range = env.config().sensor.range;
    let cand: Vec<usize> = (0..env.lattice().len())
        .filter(|&i| {
            env.graph().is_active(i)
                && i != cur
                && !env.visited()[i]
                && env.utilities()[i] > 0
                && d[cur][i].is_finite()
        })
        .collect();
    let mut out = Vec::new();
    for f in env.frontiers().cells() {
        let c = f.center();
        let best = cand
            .iter()
            .copied()
            .filter(|&i| {
                let p = env.lattice().point(i);
                p.distance(c) <= range + 1e-9 && line_of_sight(env.partial(), p, c)
            })
            .min_by(|&a, &b| {
                let (pa, pb) = (env.lattice().point(a), env.lattice().point(b));
                pa.distance_sq(c)
                    .total_cmp(&pb.distance_sq(c))
                    .then(a.cmp(&b))
            });
        out.extend(best);
    }
    out.sort_unstable();
    out.dedup();
    out
}

fn check_step(env: &ExploreEnv, d: &[Vec<f64>], verdict: &Verdict, target: usize) {
    let Verdict::Step { next, path, .. } = verdict else {
        panic!("expected a step toward {target}");
    };
    let cur = env.current();
    assert!(env.graph().has_edge(cur, *next));
    assert_eq!(path.as_ref().unwrap().last(), Some(&target));
    let edge = env
        .lattice()
        .point(cur)
        .distance(env.lattice().point(*next));
    assert!(
        (edge + d[*next][target] - d[cur][target]).abs() < 1e-9,
        "first step is not on a shortest path"
    );
}

#[test]
fn nearest_and_utility_match_exhaustive_search() {
    let cfg = small_cfg();
    let diag = (cfg.width as f64).hypot(cfg.height as f64);
    let mut decisions = 0;
    for seed in 0..6u64 {
        let (mut env, _) = ExploreEnv::reset(&cfg, 40 + seed).unwrap();
        while !env.is_done() {
            let d = floyd(&env);
            let cand = frontier_adjacent(&env, &d);
            let cur = env.current();
            let verdict = nearest_frontier(&env);
            if cand.is_empty() {
                assert!(matches!(verdict, Verdict::Complete(_)));
                break;
            }
            let want = *cand
                .iter()
                .min_by(|&&a, &&b| d[cur][a].total_cmp(&d[cur][b]).then(a.cmp(&b)))
                .unwrap();
            check_step(&env, &d, &verdict, want);

            for lambda in [1.0, 10.0, 25.0] {
                let g = |i: usize| gain(env.utilities()[i] as f64, d[cur][i] / diag, lambda);
                let best = *cand
                    .iter()
                    .max_by(|&&a, &&b| g(a).total_cmp(&g(b)).then(b.cmp(&a)))
                    .unwrap();
                check_step(
                    &env,
                    &d,
                    &utility_frontier(&env, &GainParams::new(lambda).unwrap()),
                    best,
                );
            }
            env.step_to(verdict.next().unwrap()).unwrap();
            decisions += 1;
        }
    }
    assert!(decisions > 30, "{decisions} decisions checked");
}

/// A 24x24 walled room, entirely visible from its centre.
fn open_room() -> (EnvConfig, Arc<GroundTruthMap>) {
    let n = 24;
    let cells = (0..n * n)
        .map(|i| {
            let (x, y) = (i % n, i / n);
            if x == 0 || y == 0 || x == n - 1 || y == n - 1 {
                Terrain::Obstacle
            } else {
                Terrain::Free
            }
        })
        .collect();
    let map = GroundTruthMap::new(n, n, cells, Cell::new(12, 12)).unwrap();
    let cfg = EnvConfig {
        width: n,
        height: n,
        node_count: 16,
        k: 6,
        ..EnvConfig::desk()
    };
    (cfg, Arc::new(map))
}

fn all_planners() -> Vec<PlannerKind> {
    [
        "nearest",
        "utility:1",
        "utility:10",
        "utility:25",
        "nbv:10",
        "coverage",
    ]
    .iter()
    .map(|s| PlannerKind::parse(s).unwrap())
    .collect()
}

#[test]
fn fully_visible_room_needs_no_planning() {
    let (cfg, map) = open_room();
    for mut p in all_planners() {
        let (mut env, obs) = ExploreEnv::from_truth(&cfg, map.clone()).unwrap();
        assert!(env.rate() > 0.99);
        let out = run_in(&mut env, obs, &mut p, false).unwrap();
        assert_eq!(out.stopped, Some(Completion::Explored), "{}", p.id());
        assert_eq!((out.decisions, out.length), (0, 0.0));
    }
}

#[test]
fn explored_map_reports_completion() {
    let cfg = small_cfg();
    let out = run_planner(&cfg, 7, &mut PlannerKind::Nearest, 500, false).unwrap();
    // after the episode every planner agrees there is nothing left to do
    let (mut env, _) = ExploreEnv::reset(&cfg, 7).unwrap();
    env.set_step_budget(500);
    for r in &out.replay[1..] {
        env.step_to(r.node).unwrap();
    }
    for mut p in all_planners() {
        let obs = env.observation().unwrap();
        let v = p.decide(&env, &obs).unwrap();
        if out.stopped.is_some() {
            assert!(
                matches!(v, Verdict::Complete(_)),
                "{} still wants to move",
                p.id()
            );
        }
    }
}

#[test]
fn nbv_tree_is_deterministic_and_scores_are_bounded() {
    let cfg = small_cfg();
    let diag = (cfg.width as f64).hypot(cfg.height as f64);
    let (env, _) = ExploreEnv::reset(&cfg, 5).unwrap();
    let p = NbvParams::default();
    let tree = grow_tree(&env, &p);
    assert_eq!(tree, grow_tree(&env, &p));
    assert_ne!(tree, grow_tree(&env, &NbvParams { seed: 1, ..p }));
    let (sx, sy) = env.lattice().spacing();
    let step = sx.min(sy);
    let total_frontiers = env.frontiers().len() as f64;
    for (i, v) in tree.iter().enumerate().skip(1) {
        let parent = tree[v.parent.unwrap()];
        assert!(v.parent.unwrap() < i);
        let edge = parent.point.distance(v.point);
        assert!(edge <= step + 1e-9);
        assert!(env.partial().segment_known_free(parent.point, v.point));
        assert!((v.cost - parent.cost - edge).abs() < 1e-9);
        assert!(
            (v.gain - parent.gain - gain(v.utility as f64, v.cost / diag, p.lambda)).abs() < 1e-12
        );
        // the gain can never exceed every branch vertex seeing every frontier
        let mut bound = 0.0;
        let mut w = Some(i);
        while let Some(k) = w {
            if k != 0 {
                bound += total_frontiers * (-p.lambda * tree[k].cost / diag).exp();
            }
            w = tree[k].parent;
        }
        assert!(v.gain <= bound + 1e-12);
        assert!(v.utility as f64 <= total_frontiers);
    }
    assert!(tree.len() > 10);
}

#[test]
fn harness_accounts_every_planner_identically() {
    let cfg = small_cfg();
    for seed in [2u64, 3] {
        let mut starts = Vec::new();
        for mut p in all_planners() {
            let out = run_planner(&cfg, seed, &mut p, cfg.step_budget, false).unwrap();
            let log = &out.replay;
            starts.push((log[0].node, log[0].rate));
            assert_eq!(log.len(), out.decisions + 1);
            let sum: f64 = log
                .windows(2)
                .map(|w| (w[1].x - w[0].x).hypot(w[1].y - w[0].y))
                .sum();
            assert!((sum - out.length).abs() < 1e-6, "{}", out.planner);
            assert!((log.last().unwrap().length - out.length).abs() < 1e-9);
            assert!((log.iter().map(|r| r.reward).sum::<f64>() - out.total_reward).abs() < 1e-9);
            assert!(out.completed || out.stopped.is_some() || out.decisions == cfg.step_budget);
            if out.completed {
                assert!(out.rate > cfg.reward.completion_threshold);
            }
            // reward bookkeeping reproduces the trajectory and the bonus
            let b = cfg.reward.b;
            let penalty: f64 = log.iter().map(|r| -r.r_c).sum();
            assert!((penalty / b - out.length).abs() < 1e-6, "{}", out.planner);
            let bonuses: Vec<f64> = log.iter().map(|r| r.r_f).filter(|&f| f != 0.0).collect();
            if out.completed {
                assert_eq!(bonuses, [cfg.reward.finish_bonus]);
                assert!(log.last().unwrap().r_f == cfg.reward.finish_bonus);
            } else {
                assert!(bonuses.is_empty());
            }
        }
        assert!(
            starts.windows(2).all(|w| w[0] == w[1]),
            "planners started differently: {starts:?}"
        );
    }
}
