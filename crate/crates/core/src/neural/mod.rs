//! Reverse-mode differentiation over dense matrices, the masked attention
//! encoder, the pointer policy decoder and the critic head.
//!
//! Everything is generic over [`Real`] so training runs in `f32` while
//! gradient checks run in `f64`.

mod checkpoint;
mod gradcheck;
mod matrix;
mod nets;
mod params;
mod tape;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointError, CKPT_MAGIC};
pub use gradcheck::{gradient_check, GradCheck};
pub use matrix::{Matrix, Real};
pub use nets::{
    AttentionLayer, GraphBatch, HeadKind, Linear, NetConfig, NetOutput, Network, PolicyDistribution,
};
pub use params::{Adam, AdamConfig, Gradients, ParamId, ParamSet};
pub use tape::{AttnPlan, Tape, Var};
