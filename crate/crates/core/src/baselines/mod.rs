//! Conventional exploration planners on the shared roadmap, and the
//! execution harness every planner (learned or not) runs through.

mod coverage;
mod frontier_planners;
mod harness;
mod nbv;

pub use coverage::{coverage_local, open_tour_length, CoverageParams, Tour, ViewpointSelection};
pub use frontier_planners::{gain, nearest_frontier, utility_frontier, GainParams};
pub use harness::{run_in, run_planner, EpisodeOutcome, HarnessError, Planner, PlannerKind};
pub use nbv::{grow_tree, sampled_nbv, NbvParams, TreeVertex};

use crate::explore_env::ExploreEnv;
use crate::frontier::visible_frontiers;
use crate::roadmap::{dijkstra, ShortestPaths};

/// Why a planner has nothing left to do.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Completion {
    /// No viewpoint sees any frontier.
    Explored,
    /// Frontiers are visible from some viewpoints, but none is reachable
    /// through the graph.
    Unreachable,
}

/// A planner's decision: one graph edge to execute, or completion.
#[derive(Clone, Debug, PartialEq)]
pub enum Verdict {
    Step {
        /// Lattice index of the next viewpoint (a graph neighbour).
        next: usize,
        /// Planned route starting at the current node, when the planner has one.
        path: Option<Vec<usize>>,
        /// Diagnostic `(node, score)` pairs over the candidates considered.
        scores: Vec<(usize, f64)>,
    },
    Complete(Completion),
}

impl Verdict {
    pub fn next(&self) -> Option<usize> {
        match self {
            Verdict::Step { next, .. } => Some(*next),
            Verdict::Complete(_) => None,
        }
    }
}

/// Node-level targets: unvisited active viewpoints whose utility is
/// positive, with shortest paths from the current node. Sensing is
/// deterministic, so a visited viewpoint cannot reveal anything new even
/// when frontiers remain in its range.
pub(crate) struct Targets {
    pub paths: ShortestPaths,
    /// `(node, utility)` of reachable candidates, in node order.
    pub reachable: Vec<(usize, u32)>,
    pub any_utility: bool,
}

pub(crate) fn targets(env: &ExploreEnv) -> Targets {
    let graph = env.graph();
    let utils = env.utilities();
    let current = env.current();
    let visited = env.visited();
    let paths = dijkstra(graph, env.lattice(), current);
    let mut any_utility = false;
    let mut reachable = Vec::new();
    for i in graph.active_nodes() {
        if utils[i] == 0 || i == current || visited[i] {
            continue;
        }
        any_utility = true;
        if paths.reachable(i) {
            reachable.push((i, utils[i]));
        }
    }
    Targets {
        paths,
        reachable,
        any_utility,
    }
}

impl Targets {
    pub fn completion(&self) -> Completion {
        if self.any_utility {
            Completion::Unreachable
        } else {
            Completion::Explored
        }
    }

    /// Step along the shortest path to `target`.
    pub fn step_toward(&self, target: usize, scores: Vec<(usize, f64)>) -> Verdict {
        let path = self.paths.path_to(target).expect("target is reachable");
        Verdict::Step {
            next: path[1],
            path: Some(path),
            scores,
        }
    }

    /// Frontier cells (indices into the frontier set) seen by each reachable target.
    pub fn visibility(&self, env: &ExploreEnv) -> Vec<Vec<usize>> {
        let range = env.config().sensor.range;
        self.reachable
            .iter()
            .map(|&(i, _)| {
                visible_frontiers(
                    env.partial(),
                    env.frontiers(),
                    env.lattice().point(i),
                    range,
                )
                .collect()
            })
            .collect()
    }

    /// Positions in `reachable` of the targets that are the closest
    /// (Euclidean, then lowest index) seeing viewpoint of some frontier cell.
    pub fn frontier_adjacent(&self, env: &ExploreEnv, vis: &[Vec<usize>]) -> Vec<usize> {
        let cells = env.frontiers().cells();
        let mut best: Vec<Option<(f64, usize)>> = vec![None; cells.len()];
        for (k, seen) in vis.iter().enumerate() {
            let p = env.lattice().point(self.reachable[k].0);
            for &f in seen {
                let d = p.distance_sq(cells[f].center());
                if best[f].map_or(true, |(bd, _)| d < bd) {
                    best[f] = Some((d, k));
                }
            }
        }
        let mut out: Vec<usize> = best.into_iter().flatten().map(|(_, k)| k).collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Greedy set cover of every frontier cell seen by some target: repeatedly
    /// takes the target seeing the most uncovered cells (ties: shorter path,
    /// then lower index). Returns positions in `reachable`.
    pub fn cover(&self, vis: &[Vec<usize>], frontier_count: usize) -> Vec<usize> {
        let mut covered = vec![false; frontier_count];
        let mut chosen = Vec::new();
        loop {
            let mut best: Option<(usize, usize)> = None;
            for (k, seen) in vis.iter().enumerate() {
                let gain = seen.iter().filter(|&&f| !covered[f]).count();
                if gain == 0 {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some((bk, bg)) => {
                        gain > bg
                            || (gain == bg
                                && self.paths.dist[self.reachable[k].0]
                                    < self.paths.dist[self.reachable[bk].0])
                    }
                };
                if better {
                    best = Some((k, gain));
                }
            }
            let Some((k, _)) = best else { break };
            for &f in &vis[k] {
                covered[f] = true;
            }
            chosen.push(k);
        }
        chosen.sort_unstable();
        chosen
    }
}
