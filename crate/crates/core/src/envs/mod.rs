//! Synthetic environments with known causal structure.
//!
//! Two families: a latent-state POMDP whose transition, observation, and
//! reward maps honor explicit binary structural masks, and a key-door
//! gridworld with a reward-irrelevant distractor band. Both expose the same
//! episodic pixel interface for data generation and evaluation.

pub mod gridworld;
pub mod latent;
pub mod rollout;

pub use gridworld::GridWorldSpec;
pub use latent::{
    make_latent_mdp, rollout_latent_random, step_latent, LatentGenConfig, LatentMDPSpec,
    LatentRollout, Nonlinearity, StructuralMasks,
};
pub use rollout::{rollout, rollout_many, Environment, GridWorldEnv, LatentEnv, Policy};
