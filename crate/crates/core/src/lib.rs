//! Credit-assigned decision transformer over latent causal environments.
//!
//! Modules: `numerics` (tape autodiff and Adam), `envs` (latent POMDPs and a
//! pixel key-door gridworld), `dataset` (offline trajectory container and
//! context-window sampling), `model` (two-stream transformer with learned
//! token crediting and straight-through binary masks), `training` (two-stage
//! optimization and greedy rollout evaluation), `causal` (graph queries,
//! pruning-invariance oracles, and structure identification from rollouts).

pub mod causal;
pub mod dataset;
pub mod envs;
pub mod error;
pub mod model;
pub mod numerics;
pub mod training;

pub use error::{Error, Result};
pub use numerics::Real;
