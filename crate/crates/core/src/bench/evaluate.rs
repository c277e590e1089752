use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::testset::TestSets;
use super::BenchError;
use crate::baselines::{run_in, Planner, PlannerKind, Verdict};
use crate::explore_env::{write_replay_log, EnvConfig, ExploreEnv, Observation};
use crate::neural::{load_checkpoint, Network, ParamSet};
use crate::sac_trainer::SacAgent;

/// A planner as named on the command line.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EvalPlanner {
    Classic(PlannerKind),
    /// The trained policy, acting greedily.
    Learned,
    /// Uniformly random neighbour (a sanity floor).
    Random,
}

impl EvalPlanner {
    pub fn parse(s: &str) -> Result<Self, String> {
        match s {
            "learned" => Ok(Self::Learned),
            "random" => Ok(Self::Random),
            _ => PlannerKind::parse(s).map(Self::Classic),
        }
    }

    pub fn id(&self) -> String {
        match self {
            Self::Classic(k) => k.id(),
            Self::Learned => "learned".into(),
            Self::Random => "random".into(),
        }
    }
}

/// Greedy (arg-max) execution of a trained policy.
#[derive(Clone, Debug)]
pub struct LearnedPlanner {
    pub net: Arc<Network>,
    pub params: Arc<ParamSet<f32>>,
}

impl LearnedPlanner {
    /// Loads the policy from a training checkpoint.
    pub fn from_checkpoint(path: &Path) -> Result<(Self, serde_json::Value), BenchError> {
        let ckpt = load_checkpoint(path)?;
        let (net, params) = SacAgent::policy_from_checkpoint(&ckpt)?;
        Ok((
            Self {
                net: Arc::new(net),
                params: Arc::new(params),
            },
            ckpt.meta,
        ))
    }
}

impl Planner for LearnedPlanner {
    fn id(&self) -> String {
        "learned".into()
    }

    fn decide(&mut self, _env: &ExploreEnv, obs: &Observation) -> Result<Verdict, String> {
        let dist = self
            .net
            .policy(&self.params, &[&obs.graph])?
            .pop()
            .expect("one distribution per graph");
        let a = dist.argmax();
        let next = obs.graph.node_ids[obs.neighbors()[a] as usize];
        Ok(Verdict::Step {
            next,
            path: None,
            scores: obs
                .neighbors()
                .iter()
                .zip(&dist.probs)
                .map(|(&j, &p)| (obs.graph.node_ids[j as usize], p))
                .collect(),
        })
    }
}

/// Moves to a uniformly random neighbour; the draw depends only on the
/// scenario seed and the decision index.
#[derive(Clone, Copy, Debug)]
pub struct RandomNeighbor {
    pub seed: u64,
}

impl Planner for RandomNeighbor {
    fn id(&self) -> String {
        "random".into()
    }

    fn decide(&mut self, env: &ExploreEnv, _obs: &Observation) -> Result<Verdict, String> {
        let nbrs = env.graph().neighbors(env.current());
        if nbrs.is_empty() {
            return Err(format!("node {} has no neighbours", env.current()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(
            self.seed ^ (env.steps() as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15),
        );
        Ok(Verdict::Step {
            next: nbrs[rng.gen_range(0..nbrs.len())],
            path: None,
            scores: Vec::new(),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalConfig {
    pub sets: Vec<String>,
    pub planners: Vec<EvalPlanner>,
    /// Required when `planners` contains [`EvalPlanner::Learned`].
    pub checkpoint: Option<PathBuf>,
    /// Decision budget per episode.
    pub budget: usize,
    /// Record per-decision wall time (meaningful only with one thread).
    pub timing: bool,
    /// Write one replay log per episode below this directory.
    pub replay_dir: Option<PathBuf>,
    /// Evaluate only the first `n` scenarios of each set.
    pub limit: Option<usize>,
}

impl EvalConfig {
    pub fn new(sets: Vec<String>, planners: Vec<EvalPlanner>) -> Self {
        Self {
            sets,
            planners,
            checkpoint: None,
            budget: 1024,
            timing: false,
            replay_dir: None,
            limit: None,
        }
    }
}

/// One evaluated episode; the columns of the evaluation CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub set: String,
    pub scenario: usize,
    pub planner: String,
    pub seed: u64,
    pub length: f64,
    pub completed: bool,
    pub decisions: usize,
    pub rate: f64,
    pub obs_ms: Option<f64>,
    pub infer_ms: Option<f64>,
}

/// Replay log path of one episode below `dir`.
pub fn replay_path(dir: &Path, set: &str, scenario: usize, planner: &str) -> PathBuf {
    dir.join(set)
        .join(format!("{scenario:03}_{}.csv", planner.replace(':', "_")))
}

/// Differences between the sensing/graph settings a policy was trained with
/// and the ones it is evaluated with.
fn env_mismatch(trained: &EnvConfig, eval: &EnvConfig) -> Vec<String> {
    let mut out = Vec::new();
    let mut cmp = |name: &str, a: String, b: String| {
        if a != b {
            out.push(format!("{name}: checkpoint {a}, test set {b}"));
        }
    };
    cmp("width", trained.width.to_string(), eval.width.to_string());
    cmp(
        "height",
        trained.height.to_string(),
        eval.height.to_string(),
    );
    cmp(
        "node_count",
        trained.node_count.to_string(),
        eval.node_count.to_string(),
    );
    cmp("k", trained.k.to_string(), eval.k.to_string());
    cmp(
        "sensor",
        format!("{:?}", trained.sensor),
        format!("{:?}", eval.sensor),
    );
    cmp(
        "utility_scale",
        format!("{:?}", trained.utility_scale),
        format!("{:?}", eval.utility_scale),
    );
    out
}

/// Runs every planner on every scenario of the selected sets. Rows are
/// appended to `out_csv` in (set, scenario, planner) order as they finish and
/// returned in the same order.
pub fn evaluate(
    sets: &TestSets,
    cfg: &EvalConfig,
    out_csv: &Path,
    mut on_row: impl FnMut(&EvalRow),
) -> Result<Vec<EvalRow>, BenchError> {
    if cfg.planners.is_empty() || cfg.sets.is_empty() {
        return Err(BenchError::Validation("nothing to evaluate".into()));
    }
    if cfg.budget == 0 {
        return Err(BenchError::Validation(
            "decision budget must be >= 1".into(),
        ));
    }
    let mut env_cfg = sets.manifest.scale.env_config();
    env_cfg.step_budget = cfg.budget;

    let learned = if cfg.planners.contains(&EvalPlanner::Learned) {
        let path = cfg.checkpoint.as_deref().ok_or_else(|| {
            BenchError::Validation("the learned planner needs a checkpoint".into())
        })?;
        let (planner, meta) = LearnedPlanner::from_checkpoint(path)?;
        if let Some(trained) = meta.get("env") {
            let trained: EnvConfig = serde_json::from_value(trained.clone())
                .map_err(|e| BenchError::Validation(format!("checkpoint env: {e}")))?;
            let diff = env_mismatch(&trained, &env_cfg);
            if !diff.is_empty() {
                return Err(BenchError::Validation(format!(
                    "checkpoint does not match the test sets:\n  {}",
                    diff.join("\n  ")
                )));
            }
        }
        Some(planner)
    } else {
        None
    };

    let mut tasks = Vec::new();
    for name in &cfg.sets {
        let set = sets.manifest.set(name)?;
        let take = cfg.limit.unwrap_or(usize::MAX).min(set.scenarios.len());
        for entry in &set.scenarios[..take] {
            for planner in &cfg.planners {
                tasks.push((name.as_str(), entry, *planner));
            }
        }
    }

    if let Some(parent) = out_csv.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut writer = csv::Writer::from_path(out_csv)?;
    let chunk = (rayon::current_num_threads() * 2).max(8);
    let mut rows = Vec::with_capacity(tasks.len());
    for batch in tasks.chunks(chunk) {
        let done: Vec<Result<EvalRow, BenchError>> = batch
            .par_iter()
            .map(|&(set, entry, planner)| {
                let truth = sets.load_map(entry)?;
                let (mut env, obs) = ExploreEnv::from_truth(&env_cfg, truth)?;
                let mut boxed: Box<dyn Planner> = match planner {
                    EvalPlanner::Classic(k) => Box::new(k),
                    EvalPlanner::Learned => Box::new(learned.clone().expect("loaded above")),
                    EvalPlanner::Random => Box::new(RandomNeighbor { seed: entry.seed }),
                };
                let out = run_in(&mut env, obs, boxed.as_mut(), cfg.timing)?;
                if let Some(dir) = &cfg.replay_dir {
                    let path = replay_path(dir, set, entry.id, &out.planner);
                    fs::create_dir_all(path.parent().expect("set directory"))?;
                    write_replay_log(fs::File::create(path)?, &out.replay)?;
                }
                Ok(EvalRow {
                    set: set.to_string(),
                    scenario: entry.id,
                    planner: out.planner,
                    seed: entry.seed,
                    length: out.length,
                    completed: out.completed,
                    decisions: out.decisions,
                    rate: out.rate,
                    obs_ms: out.obs_ms,
                    infer_ms: out.infer_ms,
                })
            })
            .collect();
        for row in done {
            let row = row?;
            writer.serialize(&row)?;
            on_row(&row);
            rows.push(row);
        }
        writer.flush()?;
    }
    Ok(rows)
}
