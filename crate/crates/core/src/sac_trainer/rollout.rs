use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::explore_env::{EnvConfig, EnvError, ExploreEnv, Transition};
use crate::neural::{Network, ParamSet};

/// How the policy picks actions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActionMode {
    /// Draw from the policy distribution (training).
    Sample,
    /// Take the most likely action (evaluation).
    Greedy,
}

#[derive(Debug, Error)]
pub enum RolloutError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("policy: {0}")]
    Policy(String),
}

/// One finished episode.
#[derive(Clone, Debug)]
pub struct EpisodeRecord {
    pub seed: u64,
    pub transitions: Vec<Transition>,
    pub total_reward: f64,
    pub length: f64,
    pub steps: usize,
    pub rate: f64,
    pub completed: bool,
}

/// Runs the policy on the map generated from `seed` until the episode ends.
/// Transitions are marked terminal only on completion; budget truncation
/// keeps the bootstrap.
pub fn run_episode(
    env_cfg: &EnvConfig,
    seed: u64,
    net: &Network,
    params: &ParamSet<f32>,
    mode: ActionMode,
) -> Result<EpisodeRecord, RolloutError> {
    let (mut env, obs) = ExploreEnv::reset(env_cfg, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_ac71_0000_0000);
    let mut obs = Arc::new(obs);
    let mut transitions = Vec::new();
    let mut total_reward = 0.0;
    while !env.is_done() {
        let dist = net
            .policy(params, &[&obs.graph])
            .map_err(RolloutError::Policy)?
            .pop()
            .expect("one distribution per graph");
        let action = match mode {
            ActionMode::Sample => dist.sample(rng.gen::<f64>()),
            ActionMode::Greedy => dist.argmax(),
        };
        let out = env.step(action)?;
        total_reward += out.reward;
        let next = Arc::new(out.obs);
        transitions.push(Transition {
            obs,
            action,
            reward: out.reward,
            next_obs: next.clone(),
            done: out.info.completed,
        });
        obs = next;
    }
    Ok(EpisodeRecord {
        seed,
        transitions,
        total_reward,
        length: env.trajectory().length,
        steps: env.steps(),
        rate: env.rate(),
        completed: env.completed(),
    })
}

/// Runs one episode per seed in parallel; results keep the seed order.
pub fn collect_rollouts(
    env_cfg: &EnvConfig,
    seeds: &[u64],
    net: &Network,
    params: &ParamSet<f32>,
    mode: ActionMode,
) -> Vec<Result<EpisodeRecord, RolloutError>> {
    seeds
        .par_iter()
        .map(|&s| run_episode(env_cfg, s, net, params, mode))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{HeadKind, NetConfig};

    fn small() -> (EnvConfig, Network, ParamSet<f32>) {
        let env = EnvConfig {
            width: 96,
            height: 72,
            node_count: 36,
            k: 6,
            step_budget: 12,
            ..EnvConfig::desk()
        };
        let net = NetConfig {
            d: 8,
            heads: 2,
            ffn: 8,
            layers: 1,
            ..NetConfig::desk()
        };
        let (n, p) = Network::init::<f32>(&net, HeadKind::Policy, 5);
        (env, n, p)
    }

    #[test]
    fn rollouts_are_deterministic_and_chained() {
        let (env, net, p) = small();
        let a = collect_rollouts(&env, &[3, 4, 5], &net, &p, ActionMode::Sample);
        let b = collect_rollouts(&env, &[3, 4, 5], &net, &p, ActionMode::Sample);
        for (x, y) in a.iter().zip(&b) {
            let (x, y) = (x.as_ref().unwrap(), y.as_ref().unwrap());
            assert_eq!(x.seed, y.seed);
            assert_eq!(x.total_reward, y.total_reward);
            assert_eq!(x.steps, x.transitions.len());
            assert!(x.steps <= 12);
            for w in x.transitions.windows(2) {
                assert!(Arc::ptr_eq(&w[0].next_obs, &w[1].obs));
            }
            let sum: f64 = x.transitions.iter().map(|t| t.reward).sum();
            assert!((sum - x.total_reward).abs() < 1e-9);
        }
        assert_eq!(a[0].as_ref().unwrap().seed, 3);
    }

    #[test]
    fn greedy_mode_follows_the_argmax() {
        let (env, net, p) = small();
        let ep = run_episode(&env, 8, &net, &p, ActionMode::Greedy).unwrap();
        for t in &ep.transitions {
            let d = net.policy(&p, &[&t.obs.graph]).unwrap().pop().unwrap();
            assert_eq!(t.action, d.argmax());
        }
    }
}
