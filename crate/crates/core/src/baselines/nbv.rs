use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::frontier_planners::{gain, nearest_frontier};
use super::{targets, Verdict};
use crate::explore_env::ExploreEnv;
use crate::frontier::node_utility;
use crate::geometry::Point;

/// Sampled next-best-view parameters. Step size, tree shape and gain
/// accumulation are implementation choices.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NbvParams {
    /// Samples drawn per decision.
    pub iterations: usize,
    /// Maximum extension per sample; `None` uses the smaller lattice spacing.
    pub step: Option<f64>,
    /// Exponent weight of the (diagonal-normalized) path cost.
    pub lambda: f64,
    pub seed: u64,
}

impl Default for NbvParams {
    fn default() -> Self {
        Self {
            iterations: 300,
            step: None,
            lambda: 10.0,
            seed: 0,
        }
    }
}

/// One vertex of the sampled tree.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TreeVertex {
    pub point: Point,
    pub parent: Option<usize>,
    /// Path length from the root along the tree.
    pub cost: f64,
    /// Frontier cells visible from the vertex.
    pub utility: u32,
    /// Sum of discounted gains along the root path.
    pub gain: f64,
}

/// Grows a random tree through known free space from the robot. Each
/// vertex's gain is its parent's plus `u · exp(−λ C)` of its own.
pub fn grow_tree(env: &ExploreEnv, params: &NbvParams) -> Vec<TreeVertex> {
    let partial = env.partial();
    let frontiers = env.frontiers();
    let cfg = env.config();
    let (w, h) = (cfg.width as f64, cfg.height as f64);
    let diag = w.hypot(h);
    let step = params.step.unwrap_or_else(|| {
        let (sx, sy) = env.lattice().spacing();
        sx.min(sy)
    });
    let mut rng = ChaCha8Rng::seed_from_u64(
        params.seed ^ ((env.steps() as u64) << 32) ^ env.current() as u64,
    );
    let mut tree = vec![TreeVertex {
        point: env.pose(),
        parent: None,
        cost: 0.0,
        utility: 0,
        gain: 0.0,
    }];
    for _ in 0..params.iterations {
        let sample = Point::new(rng.gen_range(0.0..w), rng.gen_range(0.0..h));
        let near = tree
            .iter()
            .enumerate()
            .min_by(|a, b| {
                a.1.point
                    .distance_sq(sample)
                    .total_cmp(&b.1.point.distance_sq(sample))
            })
            .map(|(i, _)| i)
            .expect("tree has a root");
        let from = tree[near].point;
        let dist = from.distance(sample);
        if dist < 1e-9 {
            continue;
        }
        let to = from.lerp(sample, (step / dist).min(1.0));
        if !partial.is_known_free(to.cell()) || !partial.segment_known_free(from, to) {
            continue;
        }
        let cost = tree[near].cost + from.distance(to);
        let u = node_utility(partial, frontiers, to, cfg.sensor.range);
        tree.push(TreeVertex {
            point: to,
            parent: Some(near),
            cost,
            utility: u,
            gain: tree[near].gain + gain(u as f64, cost / diag, params.lambda),
        });
    }
    tree
}

/// Steps along the graph toward the viewpoint nearest the best-scoring tree
/// vertex. Falls back to the nearest-frontier step when no vertex has
/// positive gain or the best vertex lies closest to the current viewpoint.
pub fn sampled_nbv(env: &ExploreEnv, params: &NbvParams) -> Verdict {
    let tree = grow_tree(env, params);
    let best = tree
        .iter()
        .enumerate()
        .skip(1)
        .filter(|(_, n)| n.gain > 0.0)
        .max_by(|a, b| a.1.gain.total_cmp(&b.1.gain).then(b.0.cmp(&a.0)));
    let Some((_, best)) = best else {
        return nearest_frontier(env);
    };

    // map the best vertex onto the roadmap
    let t = targets(env);
    let lattice = env.lattice();
    let current = env.current();
    let target = env
        .graph()
        .active_nodes()
        .filter(|&i| i != current && t.paths.reachable(i))
        .min_by(|&a, &b| {
            let da = lattice.point(a).distance_sq(best.point);
            let db = lattice.point(b).distance_sq(best.point);
            da.total_cmp(&db).then(a.cmp(&b))
        });
    match target {
        Some(i)
            if lattice.point(i).distance(best.point)
                < lattice.point(current).distance(best.point) =>
        {
            t.step_toward(i, vec![(i, best.gain)])
        }
        _ => nearest_frontier(env),
    }
}
