//! Benchmark harness: fixed test sets, planner evaluation, statistical
//! comparison and episode rendering.

mod compare;
mod evaluate;
mod render;
mod testset;

pub use compare::{
    compare, paired_t_test, palette, rate_curve, read_eval_rows, write_bar_plot, write_rate_plot,
    Comparison, PairedTest, PlannerSummary, COLUMN_ORDER,
};
pub use evaluate::{
    evaluate, replay_path, EvalConfig, EvalPlanner, EvalRow, LearnedPlanner, RandomNeighbor,
};
pub use render::{render_episode, RenderOptions, Rendered};
pub use testset::{
    gen_test_sets, Manifest, ScenarioEntry, SetEntry, TestSetSpec, TestSets, MANIFEST_FORMAT,
    SET_NAMES, TEST_SEED_BASE,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::HarnessError;
use crate::explore_env::{EnvConfig, EnvError};
use crate::gridmap::GridError;
use crate::neural::{CheckpointError, NetConfig};
use crate::sac_trainer::{SacConfig, TrainConfig};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error("checkpoint: {0}")]
    Checkpoint(#[from] CheckpointError),
    #[error("image: {0}")]
    Image(#[from] image::ImageError),
    #[error("{0}")]
    Validation(String),
}

/// Problem size preset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    /// Half-resolution maps and a smaller network; trains on one machine.
    Desk,
    /// Full-size maps, graph and network.
    Full,
}

impl Scale {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "desk" => Some(Self::Desk),
            "full" => Some(Self::Full),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Desk => "desk",
            Self::Full => "full",
        }
    }

    pub fn env_config(self) -> EnvConfig {
        match self {
            Self::Desk => EnvConfig::desk(),
            Self::Full => EnvConfig::full(),
        }
    }

    pub fn net_config(self) -> NetConfig {
        match self {
            Self::Desk => NetConfig::desk(),
            Self::Full => NetConfig::full(),
        }
    }

    pub fn sac_config(self) -> SacConfig {
        match self {
            Self::Desk => SacConfig::desk(),
            Self::Full => SacConfig::full(),
        }
    }

    pub fn train_config(self) -> TrainConfig {
        match self {
            Self::Desk => TrainConfig::desk(),
            Self::Full => TrainConfig::full(),
        }
    }
}
