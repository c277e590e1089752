use serde::{Deserialize, Serialize};

use super::{targets, Verdict};
use crate::explore_env::ExploreEnv;

/// Utility-weighted gain `g = u · exp(−λ C)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GainParams {
    pub lambda: f64,
    /// Divide path costs by the map diagonal so λ does not depend on map size.
    pub normalize: bool,
}

impl GainParams {
    pub fn new(lambda: f64) -> Result<Self, String> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(format!("lambda must be positive, got {lambda}"));
        }
        Ok(Self {
            lambda,
            normalize: true,
        })
    }

    /// Cost as it enters the exponent.
    pub fn cost(&self, length: f64, diagonal: f64) -> f64 {
        if self.normalize {
            length / diagonal
        } else {
            length
        }
    }
}

pub fn gain(utility: f64, cost: f64, lambda: f64) -> f64 {
    utility * (-lambda * cost).exp()
}

/// Steps toward the nearest frontier: among the viewpoints that are the
/// closest seeing viewpoint of some frontier cell, the one with the shortest
/// graph path; ties go to the smaller node index.
pub fn nearest_frontier(env: &ExploreEnv) -> Verdict {
    let t = targets(env);
    let vis = t.visibility(env);
    let adjacent = t.frontier_adjacent(env, &vis);
    let mut best: Option<(usize, f64)> = None;
    for &k in &adjacent {
        let i = t.reachable[k].0;
        let d = t.paths.dist[i];
        if best.map_or(true, |(_, bd)| d < bd) {
            best = Some((i, d));
        }
    }
    match best {
        None => Verdict::Complete(t.completion()),
        Some((i, _)) => {
            let scores = adjacent
                .iter()
                .map(|&k| (t.reachable[k].0, -t.paths.dist[t.reachable[k].0]))
                .collect();
            t.step_toward(i, scores)
        }
    }
}

/// Steps toward the viewpoint maximizing `u · exp(−λ C)` over the same
/// frontier-adjacent candidates as [`nearest_frontier`]; ties go to the
/// smaller node index.
pub fn utility_frontier(env: &ExploreEnv, params: &GainParams) -> Verdict {
    let t = targets(env);
    let vis = t.visibility(env);
    let adjacent = t.frontier_adjacent(env, &vis);
    let diag = (env.config().width as f64).hypot(env.config().height as f64);
    let scores: Vec<(usize, f64)> = adjacent
        .iter()
        .map(|&k| {
            let (i, u) = t.reachable[k];
            (
                i,
                gain(u as f64, params.cost(t.paths.dist[i], diag), params.lambda),
            )
        })
        .collect();
    let mut best: Option<(usize, f64)> = None;
    for &(i, g) in &scores {
        if best.map_or(true, |(_, bg)| g > bg) {
            best = Some((i, g));
        }
    }
    match best {
        None => Verdict::Complete(t.completion()),
        Some((i, _)) => t.step_toward(i, scores),
    }
}
