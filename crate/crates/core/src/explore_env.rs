//! The exploration environment: observation assembly, neighbour-selection
//! actions, rewards and termination.

use std::io;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frontier::{detect_frontiers, line_of_sight, update_utilities, utilities, FrontierSet};
use crate::geometry::{Cell, Point};
use crate::gridmap::{
    exploration_rate, generate_dungeon, sense_and_update, traverse_and_sense, GridError,
    GroundTruthMap, MapGenConfig, PartialMap, SensorConfig, Terrain, Tier,
};
use crate::roadmap::{
    augment, build_lattice, rebuild_graph, AugmentedGraph, CollisionFreeGraph, GraphError,
    NodeLattice, Trajectory, UtilityScale,
};

#[derive(Debug, Error)]
pub enum EnvError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("action {action} out of range for {count} neighbours")]
    InvalidAction { action: usize, count: usize },
    #[error("node {0} is not a neighbour of the current node")]
    NotANeighbor(usize),
    #[error("current node {0} has no neighbours")]
    DeadEnd(usize),
    #[error("no usable start pose after {0} attempts")]
    IsolatedStart(usize),
    #[error("episode already finished")]
    EpisodeOver,
    #[error("replay log: {0}")]
    Log(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardParams {
    /// Weight of the frontier term.
    pub a: f64,
    /// Weight of the distance penalty.
    pub b: f64,
    /// Bonus for completing exploration.
    pub finish_bonus: f64,
    /// Exploration rate that must be exceeded to complete.
    pub completion_threshold: f64,
}

impl Default for RewardParams {
    fn default() -> Self {
        Self {
            a: 1.0 / 50.0,
            b: 1.0 / 64.0,
            finish_bonus: 20.0,
            completion_threshold: 0.99,
        }
    }
}

/// `a·r_o − b·length + (finish bonus if completed)`.
pub fn total_reward(r_o: f64, edge_length: f64, completed: bool, params: &RewardParams) -> f64 {
    params.a * r_o - params.b * edge_length + if completed { params.finish_bonus } else { 0.0 }
}

/// What the frontier reward term counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrontierReward {
    /// Frontier cells of the pre-move map that stop being frontiers because
    /// the move observed their unknown neighbours.
    #[default]
    Observed,
    /// Utility of the new viewpoint on the post-move map.
    ObservableAtArrival,
}

/// Everything that defines an environment instance besides the map itself.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub width: usize,
    pub height: usize,
    pub tier: Tier,
    pub node_count: usize,
    pub k: usize,
    pub sensor: SensorConfig,
    pub reward: RewardParams,
    pub step_budget: usize,
    pub frontier_reward: FrontierReward,
    pub utility_scale: UtilityScale,
    pub start_retries: usize,
}

impl EnvConfig {
    /// 640x480 maps, 900 viewpoints, k = 20, sensor range 80.
    pub fn full() -> Self {
        Self {
            width: 640,
            height: 480,
            tier: Tier::Random,
            node_count: 900,
            k: 20,
            sensor: SensorConfig::default(),
            reward: RewardParams::default(),
            step_budget: 128,
            frontier_reward: FrontierReward::Observed,
            utility_scale: UtilityScale::CurrentMax,
            start_retries: 8,
        }
    }

    /// 320x240 maps, 225 viewpoints, k = 10, sensor range 40.
    pub fn desk() -> Self {
        Self {
            width: 320,
            height: 240,
            node_count: 225,
            k: 10,
            sensor: SensorConfig {
                range: 40.0,
                ..SensorConfig::default()
            },
            ..Self::full()
        }
    }

    pub fn map_config(&self, seed: u64) -> MapGenConfig {
        MapGenConfig::new(seed, self.tier, self.width, self.height)
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        self.sensor.validate()?;
        let bad = |m: &str| Err(GridError::InvalidConfig(m.into()).into());
        if self.k == 0 {
            return bad("k must be >= 1");
        }
        if self.step_budget == 0 {
            return bad("step budget must be >= 1");
        }
        let r = &self.reward;
        if ![r.a, r.b, r.finish_bonus]
            .iter()
            .all(|v| v.is_finite() && *v >= 0.0)
            || !(0.0..=1.0).contains(&r.completion_threshold)
        {
            return bad("reward parameters");
        }
        build_lattice(self.width, self.height, self.node_count)?;
        Ok(())
    }
}

/// The agent's view: the augmented graph with the robot's node marked.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub graph: AugmentedGraph,
}

impl Observation {
    pub fn current(&self) -> usize {
        self.graph.current as usize
    }

    /// Dense indices of the current node's neighbours (the action set).
    pub fn neighbors(&self) -> &[u32] {
        self.graph.current_neighbors()
    }

    pub fn action_count(&self) -> usize {
        self.neighbors().len()
    }
}

/// One replay record. Observations are shared between consecutive
/// transitions of an episode.
#[derive(Clone, Debug)]
pub struct Transition {
    pub obs: Arc<Observation>,
    pub action: usize,
    pub reward: f64,
    pub next_obs: Arc<Observation>,
    pub done: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    /// Frontier count entering the reward (see [`FrontierReward`]).
    pub r_o: f64,
    /// Length of the executed edge (the distance penalty is `-b * r_c_len`).
    pub r_c_len: f64,
    pub r_f: f64,
    pub rate: f64,
    pub length: f64,
    pub node: usize,
    pub newly_classified: usize,
    pub completed: bool,
    pub truncated: bool,
}

#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub obs: Observation,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

pub const REPLAY_LOG_VERSION: u32 = 1;

/// One row of the episode replay log. Row 0 is the start pose.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayRecord {
    pub version: u32,
    pub step: usize,
    pub node: usize,
    pub x: f64,
    pub y: f64,
    pub r_o: f64,
    /// Distance penalty `-b * edge length`.
    pub r_c: f64,
    pub r_f: f64,
    pub reward: f64,
    pub rate: f64,
    pub length: f64,
}

pub fn write_replay_log<W: io::Write>(w: W, records: &[ReplayRecord]) -> Result<(), EnvError> {
    let mut wr = csv::Writer::from_writer(w);
    for r in records {
        wr.serialize(r).map_err(|e| EnvError::Log(e.to_string()))?;
    }
    wr.flush().map_err(|e| EnvError::Log(e.to_string()))
}

pub fn read_replay_log<R: io::Read>(r: R) -> Result<Vec<ReplayRecord>, EnvError> {
    let mut rd = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for rec in rd.deserialize() {
        let rec: ReplayRecord = rec.map_err(|e| EnvError::Log(e.to_string()))?;
        if rec.version != REPLAY_LOG_VERSION {
            return Err(EnvError::Log(format!(
                "unsupported log version {}",
                rec.version
            )));
        }
        out.push(rec);
    }
    Ok(out)
}

/// A single exploration episode on one ground-truth map.
#[derive(Clone, Debug)]
pub struct ExploreEnv {
    cfg: EnvConfig,
    truth: Arc<GroundTruthMap>,
    lattice: Arc<NodeLattice>,
    partial: PartialMap,
    graph: CollisionFreeGraph,
    frontiers: FrontierSet,
    utilities: Vec<u32>,
    visited: Vec<bool>,
    current: usize,
    trajectory: Trajectory,
    steps: usize,
    rate: f64,
    completed: bool,
    done: bool,
    log: Vec<ReplayRecord>,
}

impl ExploreEnv {
    /// Generates the map for `seed` and starts an episode on it.
    pub fn reset(cfg: &EnvConfig, seed: u64) -> Result<(Self, Observation), EnvError> {
        let truth = generate_dungeon(&cfg.map_config(seed))?;
        Self::from_truth(cfg, Arc::new(truth))
    }

    /// Starts an episode on a given map. The robot senses at the map's start
    /// pose, then snaps (without moving cost) to the nearest active node it can
    /// see. If that node has no neighbours the start is re-drawn
    /// deterministically among the map's free cells.
    pub fn from_truth(
        cfg: &EnvConfig,
        truth: Arc<GroundTruthMap>,
    ) -> Result<(Self, Observation), EnvError> {
        cfg.validate()?;
        let lattice = Arc::new(build_lattice(
            truth.width(),
            truth.height(),
            cfg.node_count,
        )?);
        let mut truth = truth;
        let mut rng: Option<ChaCha8Rng> = None;
        for attempt in 0..=cfg.start_retries {
            if attempt > 0 {
                let rng = rng.get_or_insert_with(|| {
                    let s = truth.start();
                    ChaCha8Rng::seed_from_u64(((s.row as u64) << 32) | s.col as u64)
                });
                let free: Vec<usize> = (0..truth.cells().len())
                    .filter(|&i| {
                        truth.cells()[i] == Terrain::Free && truth.in_closure(truth.cell_at(i))
                    })
                    .collect();
                let &pick = free.choose(rng).ok_or(EnvError::IsolatedStart(attempt))?;
                truth = Arc::new(truth.with_start(truth.cell_at(pick))?);
            }
            if let Some(env) = Self::try_start(cfg, truth.clone(), lattice.clone())? {
                let obs = env.observation()?;
                return Ok((env, obs));
            }
        }
        Err(EnvError::IsolatedStart(cfg.start_retries + 1))
    }

    fn try_start(
        cfg: &EnvConfig,
        truth: Arc<GroundTruthMap>,
        lattice: Arc<NodeLattice>,
    ) -> Result<Option<Self>, EnvError> {
        let mut partial = PartialMap::for_truth(&truth);
        let pose = truth.start().center();
        sense_and_update(&mut partial, &truth, pose, &cfg.sensor)?;
        let graph = rebuild_graph(&partial, &lattice, cfg.k);
        let snapped = graph
            .active_nodes()
            .filter(|&i| line_of_sight(&partial, pose, lattice.point(i)))
            .min_by(|&a, &b| {
                pose.distance_sq(lattice.point(a))
                    .total_cmp(&pose.distance_sq(lattice.point(b)))
                    .then(a.cmp(&b))
            });
        let Some(current) = snapped.filter(|&c| !graph.neighbors(c).is_empty()) else {
            return Ok(None);
        };
        let frontiers = detect_frontiers(&partial);
        let utilities = utilities(&partial, &frontiers, lattice.points(), cfg.sensor.range);
        let mut visited = vec![false; lattice.len()];
        visited[current] = true;
        let rate = exploration_rate(&partial, &truth)?;
        let p = lattice.point(current);
        let log = vec![ReplayRecord {
            version: REPLAY_LOG_VERSION,
            step: 0,
            node: current,
            x: p.x,
            y: p.y,
            r_o: 0.0,
            r_c: 0.0,
            r_f: 0.0,
            reward: 0.0,
            rate,
            length: 0.0,
        }];
        Ok(Some(Self {
            cfg: cfg.clone(),
            truth,
            lattice,
            partial,
            graph,
            frontiers,
            utilities,
            visited,
            current,
            trajectory: Trajectory::start(current),
            steps: 0,
            rate,
            completed: false,
            done: false,
            log,
        }))
    }

    pub fn observation(&self) -> Result<Observation, EnvError> {
        let graph = augment(
            &self.graph,
            &self.lattice,
            &self.utilities,
            &self.visited,
            self.current,
            self.cfg.utility_scale,
        )?;
        Ok(Observation { graph })
    }

    /// Moves to the `action`-th neighbour (in sorted neighbour order).
    pub fn step(&mut self, action: usize) -> Result<StepOutcome, EnvError> {
        let nb = self.graph.neighbors(self.current);
        let &target = nb.get(action).ok_or(EnvError::InvalidAction {
            action,
            count: nb.len(),
        })?;
        self.step_to(target)
    }

    /// Moves along the edge to lattice node `target`.
    pub fn step_to(&mut self, target: usize) -> Result<StepOutcome, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeOver);
        }
        if !self.graph.has_edge(self.current, target) {
            return Err(EnvError::NotANeighbor(target));
        }
        let from = self.lattice.point(self.current);
        let to = self.lattice.point(target);
        let report =
            traverse_and_sense(&mut self.partial, &self.truth, from, to, &self.cfg.sensor)?;

        let before = std::mem::replace(&mut self.frontiers, detect_frontiers(&self.partial));
        let range = self.cfg.sensor.range;
        let reach = range.ceil() as i32 + 1;
        let lo = Cell::new(
            from.x.min(to.x).floor() as i32 - reach,
            from.y.min(to.y).floor() as i32 - reach,
        );
        let hi = Cell::new(
            from.x.max(to.x).floor() as i32 + reach,
            from.y.max(to.y).floor() as i32 + reach,
        );
        update_utilities(
            &mut self.utilities,
            &self.partial,
            &self.frontiers,
            self.lattice.points(),
            range,
            (lo, hi),
        );
        self.graph = rebuild_graph(&self.partial, &self.lattice, self.cfg.k);

        self.current = target;
        self.visited[target] = true;
        self.trajectory.push(&self.lattice, target);
        self.steps += 1;
        self.rate = exploration_rate(&self.partial, &self.truth)?;

        let r_o = match self.cfg.frontier_reward {
            FrontierReward::Observed => before
                .cells()
                .iter()
                .filter(|&&c| !self.frontiers.contains(c))
                .count() as f64,
            FrontierReward::ObservableAtArrival => self.utilities[target] as f64,
        };
        self.completed = self.rate > self.cfg.reward.completion_threshold;
        let truncated = !self.completed && self.steps >= self.cfg.step_budget;
        self.done = self.completed || truncated;
        let reward = total_reward(r_o, report.length, self.completed, &self.cfg.reward);
        let r_f = if self.completed {
            self.cfg.reward.finish_bonus
        } else {
            0.0
        };
        let info = StepInfo {
            r_o,
            r_c_len: report.length,
            r_f,
            rate: self.rate,
            length: self.trajectory.length,
            node: target,
            newly_classified: report.newly_classified,
            completed: self.completed,
            truncated,
        };
        self.log.push(ReplayRecord {
            version: REPLAY_LOG_VERSION,
            step: self.steps,
            node: target,
            x: to.x,
            y: to.y,
            r_o,
            r_c: -self.cfg.reward.b * report.length,
            r_f,
            reward,
            rate: self.rate,
            length: self.trajectory.length,
        });
        if !self.done && self.graph.neighbors(target).is_empty() {
            return Err(EnvError::DeadEnd(target));
        }
        Ok(StepOutcome {
            obs: self.observation()?,
            reward,
            done: self.done,
            info,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn truth(&self) -> &Arc<GroundTruthMap> {
        &self.truth
    }

    pub fn lattice(&self) -> &Arc<NodeLattice> {
        &self.lattice
    }

    pub fn partial(&self) -> &PartialMap {
        &self.partial
    }

    pub fn graph(&self) -> &CollisionFreeGraph {
        &self.graph
    }

    pub fn frontiers(&self) -> &FrontierSet {
        &self.frontiers
    }

    /// Utility per lattice node (0 for inactive nodes).
    pub fn utilities(&self) -> &[u32] {
        &self.utilities
    }

    pub fn visited(&self) -> &[bool] {
        &self.visited
    }

    pub fn current(&self) -> usize {
        self.current
    }

    pub fn pose(&self) -> Point {
        self.lattice.point(self.current)
    }

    pub fn trajectory(&self) -> &Trajectory {
        &self.trajectory
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn completed(&self) -> bool {
        self.completed
    }

    pub fn replay_log(&self) -> &[ReplayRecord] {
        &self.log
    }

    /// Overrides the decision budget (evaluation uses a larger one than training).
    pub fn set_step_budget(&mut self, budget: usize) {
        self.cfg.step_budget = budget;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridmap::Occupancy;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    const P: RewardParams = RewardParams {
        a: 1.0 / 50.0,
        b: 1.0 / 64.0,
        finish_bonus: 20.0,
        completion_threshold: 0.99,
    };

    #[test]
    fn reward_arithmetic() {
        assert_eq!(total_reward(0.0, 0.0, false, &P), 0.0);
        assert_abs_diff_eq!(total_reward(50.0, 64.0, false, &P), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(total_reward(10.0, 32.0, true, &P), 19.7, epsilon = 1e-12);
        assert_abs_diff_eq!(total_reward(0.0, 64.0, false, &P), -1.0, epsilon = 1e-12);
        assert_eq!(RewardParams::default(), P);
    }

    fn open_map(w: usize, h: usize, start: Cell) -> Arc<GroundTruthMap> {
        let mut cells = vec![Terrain::Free; w * h];
        for r in 0..h {
            for c in 0..w {
                if r == 0 || c == 0 || r == h - 1 || c == w - 1 {
                    cells[r * w + c] = Terrain::Obstacle;
                }
            }
        }
        Arc::new(GroundTruthMap::new(w, h, cells, start).unwrap())
    }

    #[test]
    fn reset_senses_and_is_deterministic() {
        let cfg = EnvConfig::desk();
        let (a, oa) = ExploreEnv::reset(&cfg, 11).unwrap();
        let (b, ob) = ExploreEnv::reset(&cfg, 11).unwrap();
        assert!(a.rate() > 0.0);
        assert_eq!(oa, ob);
        assert_eq!(a.current(), b.current());
        assert!(oa.action_count() > 0);
        assert!(a.visited()[a.current()]);
    }

    #[test]
    fn initial_active_nodes_are_lattice_points_in_sensed_disk() {
        let mut cfg = EnvConfig::full();
        cfg.tier = Tier::Easy;
        let (env, _) = ExploreEnv::reset(&cfg, 7).unwrap();
        let truth = env.truth();
        let start = truth.start().center();
        let range_sq = cfg.sensor.range * cfg.sensor.range + 1e-9;
        // oracle: a lattice point is sensed iff its cell is free, its center lies
        // within range, and the open segment from the start reaches it through
        // free cells only (nothing to stop the rays on the way)
        let expected = env
            .lattice()
            .points()
            .iter()
            .filter(|p| {
                let c = p.cell();
                truth.is_free(c)
                    && c.center().distance_sq(start) <= range_sq
                    && crate::geometry::segment_cells(start, c.center())
                        .iter()
                        .all(|&k| truth.is_free(k))
            })
            .count();
        let active = env.graph().active_count();
        // rays are discrete, so a few grazing points may be missed; none may be extra
        assert!(active <= expected, "{active} > {expected}");
        assert!(
            active as f64 >= 0.95 * expected as f64,
            "{active} vs {expected}"
        );
        for i in env.graph().active_nodes() {
            assert_eq!(env.partial().get(env.lattice().cell(i)), Occupancy::Free);
        }
    }

    #[test]
    fn invalid_action_is_rejected() {
        let (mut env, obs) = ExploreEnv::reset(&EnvConfig::desk(), 5).unwrap();
        let n = obs.action_count();
        assert!(matches!(
            env.step(n),
            Err(EnvError::InvalidAction { action, count }) if action == n && count == n
        ));
    }

    #[test]
    fn stepping_onto_known_area_costs_only_distance() {
        // fully revealed surroundings: nothing new is observed by the move
        let truth = open_map(64, 64, Cell::new(20, 20));
        let mut cfg = EnvConfig::desk();
        cfg.node_count = 16;
        cfg.k = 4;
        cfg.sensor.range = 200.0;
        cfg.sensor.ray_count = 4000;
        let (mut env, obs) = ExploreEnv::from_truth(&cfg, truth).unwrap();
        // everything was seen at reset; the episode completes on the first move
        assert!(env.rate() > 0.99);
        let out = env.step(0).unwrap();
        assert_eq!(out.info.r_o, 0.0);
        assert!(out.done && out.info.completed);
        let expected = -out.info.r_c_len / 64.0 + 20.0;
        assert_abs_diff_eq!(out.reward, expected, epsilon = 1e-12);
        assert!(obs.action_count() >= 1);
        assert!(matches!(env.step(0), Err(EnvError::EpisodeOver)));
    }

    #[test]
    fn observed_frontier_reward_matches_before_after_oracle() {
        // long corridor, sensor much shorter than the corridor
        let w = 200;
        let h = 24;
        let truth = open_map(w, h, Cell::new(8, 12));
        let mut cfg = EnvConfig::desk();
        cfg.node_count = 40; // 5 x 8
        cfg.k = 4;
        cfg.sensor.range = 30.0;
        let (mut env, _) = ExploreEnv::from_truth(&cfg, truth).unwrap();
        for _ in 0..6 {
            let pre = detect_frontiers(env.partial());
            // pick the east-most neighbour to push into unknown space
            let cur = env.current();
            let nb = env.graph().neighbors(cur).to_vec();
            let target = *nb
                .iter()
                .max_by(|&&a, &&b| {
                    env.lattice()
                        .point(a)
                        .x
                        .total_cmp(&env.lattice().point(b).x)
                })
                .unwrap();
            let out = env.step_to(target).unwrap();
            let post = detect_frontiers(env.partial());
            let oracle = pre
                .cells()
                .iter()
                .filter(|c| !post.cells().contains(c))
                .count();
            assert_eq!(out.info.r_o, oracle as f64);
            if out.done {
                break;
            }
        }
    }

    #[test]
    fn incremental_utilities_equal_full_recompute() {
        let cfg = EnvConfig::desk();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for seed in 0..4 {
            let (mut env, mut obs) = ExploreEnv::reset(&cfg, seed).unwrap();
            for _ in 0..25 {
                let a = rng.gen_range(0..obs.action_count());
                let out = env.step(a).unwrap();
                let full = utilities(
                    env.partial(),
                    env.frontiers(),
                    env.lattice().points(),
                    cfg.sensor.range,
                );
                assert_eq!(env.utilities(), full.as_slice());
                if out.done {
                    break;
                }
                obs = out.obs;
            }
        }
    }

    #[test]
    fn replay_log_roundtrips_and_matches_lengths() {
        let (mut env, mut obs) = ExploreEnv::reset(&EnvConfig::desk(), 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut penalty = 0.0;
        for _ in 0..10 {
            let out = env.step(rng.gen_range(0..obs.action_count())).unwrap();
            penalty += out.info.r_c_len;
            obs = out.obs;
        }
        assert_abs_diff_eq!(penalty, env.trajectory().length, epsilon = 1e-9);
        let mut buf = Vec::new();
        write_replay_log(&mut buf, env.replay_log()).unwrap();
        let back = read_replay_log(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 11);
        assert_eq!(back, env.replay_log());
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("version,step,node,x,y,r_o,r_c,r_f,reward,rate,length"));
    }

    #[test]
    fn budget_truncates_without_bonus() {
        let mut cfg = EnvConfig::desk();
        cfg.step_budget = 3;
        let (mut env, _) = ExploreEnv::reset(&cfg, 4).unwrap();
        let mut last = None;
        for _ in 0..3 {
            last = Some(env.step(0).unwrap());
        }
        let out = last.unwrap();
        assert!(out.done);
        assert!(out.info.truncated && !out.info.completed);
        assert_eq!(out.info.r_f, 0.0);
    }
}
