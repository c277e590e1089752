//! Attention-based autonomous exploration workbench.
//!
//! A 2D occupancy-grid exploration simulator, a graph attention policy and
//! critic trained with discrete soft actor-critic, classical baseline
//! planners, and a benchmark harness comparing planners by the trajectory
//! length needed to finish exploring a map.

pub mod baselines;
pub mod bench;
pub mod explore_env;
pub mod frontier;
pub mod geometry;
pub mod gridmap;
pub mod neural;
pub mod roadmap;
pub mod sac_trainer;
