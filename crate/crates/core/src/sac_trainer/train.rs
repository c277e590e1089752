use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::agent::{SacAgent, SacConfig, TrainMetrics};
use super::buffer::ReplayBuffer;
use super::rollout::{collect_rollouts, ActionMode};
use crate::explore_env::EnvConfig;
use crate::neural::{load_checkpoint, save_checkpoint, CheckpointError, NetConfig};

/// Training maps are generated from seeds below this bound; evaluation sets
/// draw theirs from above it.
pub const TRAIN_SEED_LIMIT: u64 = 1 << 32;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("metrics: {0}")]
    Csv(#[from] csv::Error),
    #[error("config: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(#[from] CheckpointError),
    #[error("update failed: {0}")]
    Update(String),
}

/// Everything a training run needs; serialized as TOML next to the outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub seed: u64,
    pub episodes: usize,
    /// Episodes collected in parallel with the same policy snapshot.
    pub parallel_envs: usize,
    /// Checkpoint period in episodes (the final state is always saved).
    pub checkpoint_every: usize,
    pub env: EnvConfig,
    pub net: NetConfig,
    pub sac: SacConfig,
}

impl TrainConfig {
    pub fn full() -> Self {
        Self {
            seed: 0,
            episodes: 10_000,
            parallel_envs: 32,
            checkpoint_every: 500,
            env: EnvConfig::full(),
            net: NetConfig::full(),
            sac: SacConfig::full(),
        }
    }

    pub fn desk() -> Self {
        Self {
            episodes: 3_000,
            parallel_envs: 8,
            checkpoint_every: 250,
            env: EnvConfig::desk(),
            net: NetConfig::desk(),
            sac: SacConfig::desk(),
            ..Self::full()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, TrainError> {
        let cfg: Self = toml::from_str(text).map_err(|e| TrainError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<Self, TrainError> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        self.env
            .validate()
            .map_err(|e| TrainError::Config(e.to_string()))?;
        self.net.validate().map_err(TrainError::Config)?;
        self.sac.validate().map_err(TrainError::Config)?;
        if self.parallel_envs == 0 {
            return Err(TrainError::Config("parallel_envs must be positive".into()));
        }
        Ok(())
    }

    /// Map seed of training episode `index`, always below [`TRAIN_SEED_LIMIT`].
    pub fn episode_seed(&self, index: u64) -> u64 {
        // splitmix64 finalizer over (seed, index)
        let mut z = self.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15)
            ^ index.wrapping_add(0x632b_e59b_d9b4_e019);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        (z ^ (z >> 31)) % TRAIN_SEED_LIMIT
    }
}

/// One row of `metrics.csv`, written per episode. Loss columns average the
/// updates made after that episode and are empty before training starts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub episode: u64,
    pub seed: u64,
    pub updates: u64,
    pub reward: f64,
    pub length: f64,
    pub steps: usize,
    pub rate: f64,
    pub completed: bool,
    pub buffer: usize,
    pub critic_loss: Option<f64>,
    pub policy_loss: Option<f64>,
    pub alpha_loss: Option<f64>,
    pub alpha: Option<f64>,
    pub entropy: Option<f64>,
    pub q_mean: Option<f64>,
}

/// One row of `timing.csv`. Wall time lives apart from `metrics.csv` so
/// that the metrics of a seeded run are byte-for-byte reproducible.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct TimingRow {
    episode: u64,
    wall_s: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSummary {
    pub episodes: u64,
    pub failed_episodes: u64,
    pub updates: u64,
    pub wall_s: f64,
    pub checkpoint: PathBuf,
}

fn mean_metrics(ms: &[TrainMetrics]) -> Option<TrainMetrics> {
    if ms.is_empty() {
        return None;
    }
    let n = ms.len() as f64;
    let avg = |f: fn(&TrainMetrics) -> f64| ms.iter().map(f).sum::<f64>() / n;
    Some(TrainMetrics {
        critic_loss: avg(|m| m.critic_loss),
        policy_loss: avg(|m| m.policy_loss),
        alpha_loss: avg(|m| m.alpha_loss),
        alpha: avg(|m| m.alpha),
        entropy: avg(|m| m.entropy),
        q_mean: avg(|m| m.q_mean),
    })
}

/// Trains into `out_dir` (`config.toml`, `metrics.csv`, `timing.csv`,
/// `checkpoint.ckpt`).
/// With `resume`, networks, optimizers, temperature and counters continue
/// from that checkpoint; the replay buffer starts empty again.
/// Wall time of the last row of a timing log, or 0 when there is none.
fn last_wall_time(path: &Path) -> f64 {
    csv::Reader::from_path(path)
        .ok()
        .and_then(|mut r| r.deserialize::<TimingRow>().filter_map(Result::ok).last())
        .map_or(0.0, |row| row.wall_s)
}

pub fn train(
    cfg: &TrainConfig,
    out_dir: &Path,
    resume: Option<&Path>,
    mut on_row: impl FnMut(&MetricsRow),
) -> Result<TrainSummary, TrainError> {
    cfg.validate()?;
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("config.toml"), cfg.to_toml())?;
    let ckpt_path = out_dir.join("checkpoint.ckpt");
    let metrics_path = out_dir.join("metrics.csv");
    let timing_path = out_dir.join("timing.csv");

    let (mut agent, mut episode, mut failed) = match resume {
        Some(path) => {
            let ckpt = load_checkpoint(path)?;
            let agent = SacAgent::from_checkpoint(&ckpt)?;
            if agent.policy_net.cfg != cfg.net {
                return Err(TrainError::Config(
                    "checkpoint network differs from the config".into(),
                ));
            }
            let get = |k: &str| ckpt.meta.get(k).and_then(|v| v.as_f64()).unwrap_or(0.0);
            (agent, get("episodes") as u64, get("failed_episodes") as u64)
        }
        None => (SacAgent::new(&cfg.net, &cfg.sac, cfg.env.k, cfg.seed), 0, 0),
    };
    // wall-clock time stays out of the checkpoint so that seeded runs are
    // byte-identical; a resumed run continues the clock from timing.csv
    let wall_offset = match resume {
        Some(_) => last_wall_time(&timing_path),
        None => 0.0,
    };
    let open = |path: &Path| -> Result<csv::Writer<fs::File>, TrainError> {
        let append = resume.is_some() && path.exists();
        let file = fs::OpenOptions::new()
            .create(true)
            .append(append)
            .write(true)
            .truncate(!append)
            .open(path)?;
        Ok(csv::WriterBuilder::new()
            .has_headers(!append)
            .from_writer(file))
    };
    let mut writer = open(&metrics_path)?;
    let mut timing = open(&timing_path)?;

    let mut buffer = ReplayBuffer::new(cfg.sac.buffer_capacity);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ episode.rotate_left(32));
    let started = Instant::now();
    let target = cfg.episodes as u64;
    let mut last_saved = episode;
    let save = |agent: &SacAgent, episode: u64, failed: u64| {
        let meta = serde_json::json!({
            "episodes": episode,
            "failed_episodes": failed,
            "env": cfg.env,
            "seed": cfg.seed,
        });
        save_checkpoint(&ckpt_path, &agent.to_checkpoint(meta))
    };

    while episode < target {
        let n = (cfg.parallel_envs as u64).min(target - episode);
        let seeds: Vec<u64> = (episode..episode + n)
            .map(|i| cfg.episode_seed(i))
            .collect();
        let results = collect_rollouts(
            &cfg.env,
            &seeds,
            &agent.policy_net,
            &agent.policy,
            ActionMode::Sample,
        );
        for (seed, result) in seeds.into_iter().zip(results) {
            episode += 1;
            let ep = match result {
                Ok(ep) => ep,
                Err(_) => {
                    failed += 1;
                    continue;
                }
            };
            buffer.extend(ep.transitions.iter().cloned());
            let mut ms = Vec::new();
            for _ in 0..cfg.sac.updates_per_episode {
                match agent.train_step(&buffer, &mut rng) {
                    None => break,
                    Some(r) => ms.push(r.map_err(TrainError::Update)?),
                }
            }
            let m = mean_metrics(&ms);
            let row = MetricsRow {
                episode,
                seed,
                updates: agent.updates,
                reward: ep.total_reward,
                length: ep.length,
                steps: ep.steps,
                rate: ep.rate,
                completed: ep.completed,
                buffer: buffer.len(),
                critic_loss: m.map(|m| m.critic_loss),
                policy_loss: m.map(|m| m.policy_loss),
                alpha_loss: m.map(|m| m.alpha_loss),
                alpha: m.map(|m| m.alpha),
                entropy: m.map(|m| m.entropy),
                q_mean: m.map(|m| m.q_mean),
            };
            writer.serialize(&row)?;
            timing.serialize(TimingRow {
                episode,
                wall_s: wall_offset + started.elapsed().as_secs_f64(),
            })?;
            on_row(&row);
        }
        writer.flush()?;
        timing.flush()?;
        if cfg.checkpoint_every > 0 && episode - last_saved >= cfg.checkpoint_every as u64 {
            save(&agent, episode, failed)?;
            last_saved = episode;
        }
    }
    let wall_s = wall_offset + started.elapsed().as_secs_f64();
    save(&agent, episode, failed)?;
    Ok(TrainSummary {
        episodes: episode,
        failed_episodes: failed,
        updates: agent.updates,
        wall_s,
        checkpoint: ckpt_path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> TrainConfig {
        TrainConfig {
            seed: 3,
            episodes: 6,
            parallel_envs: 3,
            checkpoint_every: 3,
            env: EnvConfig {
                width: 96,
                height: 72,
                node_count: 36,
                k: 6,
                step_budget: 10,
                ..EnvConfig::desk()
            },
            net: NetConfig {
                d: 8,
                heads: 2,
                ffn: 8,
                layers: 1,
                ..NetConfig::desk()
            },
            sac: SacConfig {
                batch_size: 8,
                min_buffer: 10,
                buffer_capacity: 100,
                updates_per_episode: 2,
                ..SacConfig::desk()
            },
        }
    }

    #[test]
    fn toml_roundtrip_and_validation() {
        for cfg in [TrainConfig::full(), TrainConfig::desk(), tiny()] {
            assert_eq!(TrainConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        }
        let mut bad = tiny();
        bad.net.heads = 3;
        assert!(TrainConfig::from_toml(&bad.to_toml()).is_err());
    }

    #[test]
    fn episode_seeds_stay_in_the_training_range() {
        let cfg = TrainConfig::desk();
        let seeds: std::collections::HashSet<u64> =
            (0..10_000).map(|i| cfg.episode_seed(i)).collect();
        assert_eq!(seeds.len(), 10_000);
        assert!(seeds.iter().all(|&s| s < TRAIN_SEED_LIMIT));
    }

    #[test]
    fn short_run_writes_metrics_and_resumable_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny();
        let mut rows = Vec::new();
        let s = train(&cfg, dir.path(), None, |r| rows.push(r.clone())).unwrap();
        assert_eq!(s.episodes, 6);
        assert_eq!(rows.len() as u64, 6 - s.failed_episodes);
        assert!(s.updates > 0);
        assert!(rows.iter().any(|r| r.critic_loss.is_some()));
        let text = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
        assert!(text.starts_with("episode,seed,updates,reward"));
        assert_eq!(
            TrainConfig::load(&dir.path().join("config.toml")).unwrap(),
            cfg
        );
        assert_eq!(
            fs::read_to_string(dir.path().join("timing.csv"))
                .unwrap()
                .lines()
                .count(),
            rows.len() + 1
        );

        let again = tempfile::tempdir().unwrap();
        train(&cfg, again.path(), None, |_| {}).unwrap();
        assert_eq!(
            fs::read(again.path().join("metrics.csv")).unwrap(),
            text.as_bytes()
        );
        assert_eq!(
            fs::read(again.path().join("checkpoint.ckpt")).unwrap(),
            fs::read(&s.checkpoint).unwrap()
        );

        let mut more = cfg.clone();
        more.episodes = 9;
        let s2 = train(&more, dir.path(), Some(&s.checkpoint), |_| {}).unwrap();
        assert_eq!(s2.episodes, 9);
        assert!(s2.updates > s.updates);
        let text = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
        assert_eq!(text.lines().filter(|l| l.starts_with("episode")).count(), 1);
        // the clock continues from the timing log
        assert!(s2.wall_s > last_wall_time(&again.path().join("timing.csv")).min(s.wall_s));
    }
}
