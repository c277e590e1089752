use std::time::Instant;

use thiserror::Error;

use super::coverage::{coverage_local, CoverageParams};
use super::frontier_planners::{nearest_frontier, utility_frontier, GainParams};
use super::nbv::{sampled_nbv, NbvParams};
use super::{Completion, Verdict};
use crate::explore_env::{EnvConfig, EnvError, ExploreEnv, Observation, ReplayRecord};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("planner {planner}: {message}")]
    Planner { planner: String, message: String },
    #[error("planner {planner} chose {to}, which is not a neighbour of {from}")]
    InvalidEdge {
        planner: String,
        from: usize,
        to: usize,
    },
}

/// Anything that picks the next viewpoint from the environment state and
/// the current observation.
pub trait Planner {
    fn id(&self) -> String;
    fn decide(&mut self, env: &ExploreEnv, obs: &Observation) -> Result<Verdict, String>;
}

/// The conventional planners.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PlannerKind {
    Nearest,
    Utility(GainParams),
    Nbv(NbvParams),
    Coverage(CoverageParams),
}

impl PlannerKind {
    /// Parses `nearest`, `utility:<λ>`, `nbv[:<λ>]` or `coverage`.
    pub fn parse(s: &str) -> Result<Self, String> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let lambda = |a: Option<&str>| -> Result<Option<f64>, String> {
            a.map(|a| {
                a.parse::<f64>()
                    .map_err(|e| format!("bad lambda {a:?}: {e}"))
            })
            .transpose()
        };
        match name {
            "nearest" if arg.is_none() => Ok(Self::Nearest),
            "utility" => {
                let l = lambda(arg)?.ok_or("utility planner needs a lambda, e.g. utility:10")?;
                Ok(Self::Utility(GainParams::new(l)?))
            }
            "nbv" => {
                let mut p = NbvParams::default();
                if let Some(l) = lambda(arg)? {
                    p.lambda = GainParams::new(l)?.lambda;
                }
                Ok(Self::Nbv(p))
            }
            "coverage" if arg.is_none() => Ok(Self::Coverage(CoverageParams::default())),
            _ => Err(format!("unknown planner {s:?}")),
        }
    }
}

impl Planner for PlannerKind {
    fn id(&self) -> String {
        match self {
            Self::Nearest => "nearest".into(),
            Self::Utility(p) => format!("utility:{}", p.lambda),
            Self::Nbv(p) => format!("nbv:{}", p.lambda),
            Self::Coverage(_) => "coverage".into(),
        }
    }

    fn decide(&mut self, env: &ExploreEnv, _obs: &Observation) -> Result<Verdict, String> {
        Ok(match self {
            Self::Nearest => nearest_frontier(env),
            Self::Utility(p) => utility_frontier(env, p),
            Self::Nbv(p) => sampled_nbv(env, p),
            Self::Coverage(p) => coverage_local(env, p),
        })
    }
}

/// Result of one planner episode.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeOutcome {
    pub planner: String,
    pub length: f64,
    pub completed: bool,
    pub decisions: usize,
    pub rate: f64,
    pub total_reward: f64,
    /// Set when the planner stopped before the environment finished.
    pub stopped: Option<Completion>,
    /// Mean per-decision time spent sensing and rebuilding the observation.
    pub obs_ms: Option<f64>,
    /// Mean per-decision time spent inside the planner.
    pub infer_ms: Option<f64>,
    pub replay: Vec<ReplayRecord>,
}

/// Runs `planner` on the map of `seed` with `budget` decisions.
pub fn run_planner(
    env_cfg: &EnvConfig,
    seed: u64,
    planner: &mut dyn Planner,
    budget: usize,
    record_timing: bool,
) -> Result<EpisodeOutcome, HarnessError> {
    let (mut env, obs) = ExploreEnv::reset(env_cfg, seed)?;
    env.set_step_budget(budget);
    run_in(&mut env, obs, planner, record_timing)
}

/// Runs `planner` until the environment finishes or the planner signals
/// completion. Every planner goes through the same `step_to` accounting.
pub fn run_in(
    env: &mut ExploreEnv,
    mut obs: Observation,
    planner: &mut dyn Planner,
    record_timing: bool,
) -> Result<EpisodeOutcome, HarnessError> {
    let id = planner.id();
    let (mut obs_s, mut infer_s) = (0.0, 0.0);
    let mut total_reward = 0.0;
    let mut stopped = None;
    while !env.is_done() {
        let t0 = Instant::now();
        let verdict = planner
            .decide(env, &obs)
            .map_err(|message| HarnessError::Planner {
                planner: id.clone(),
                message,
            })?;
        infer_s += t0.elapsed().as_secs_f64();
        let next = match verdict {
            Verdict::Complete(c) => {
                stopped = Some(c);
                break;
            }
            Verdict::Step { next, .. } => next,
        };
        if !env.graph().has_edge(env.current(), next) {
            return Err(HarnessError::InvalidEdge {
                planner: id,
                from: env.current(),
                to: next,
            });
        }
        let t1 = Instant::now();
        let out = env.step_to(next)?;
        obs_s += t1.elapsed().as_secs_f64();
        total_reward += out.reward;
        obs = out.obs;
    }
    let decisions = env.steps();
    let per = |s: f64| (record_timing && decisions > 0).then(|| 1e3 * s / decisions as f64);
    Ok(EpisodeOutcome {
        planner: id,
        length: env.trajectory().length,
        completed: env.completed(),
        decisions,
        rate: env.rate(),
        total_reward,
        stopped,
        obs_ms: per(obs_s),
        infer_ms: per(infer_s),
        replay: env.replay_log().to_vec(),
    })
}
