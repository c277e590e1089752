//! Discrete soft actor-critic: replay buffer, the critic / policy /
//! temperature losses, twin target critics and parallel rollout collection.

mod agent;
mod buffer;
mod losses;
mod rollout;
mod train;

pub use agent::{SacAgent, SacConfig, TrainMetrics};
pub use buffer::ReplayBuffer;
pub use losses::{
    critic_target, policy_loss_and_grad, soft_state_value, target_entropy, temperature_grad,
    LossError,
};
pub use rollout::{collect_rollouts, run_episode, ActionMode, EpisodeRecord, RolloutError};
pub use train::{train, MetricsRow, TrainConfig, TrainError, TrainSummary, TRAIN_SEED_LIMIT};
