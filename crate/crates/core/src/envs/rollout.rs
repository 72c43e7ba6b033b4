//! Uniform episode interface over the synthetic environments, plus the
//! behavior policies used to generate offline data.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{Trajectory, TrajectoryMeta};
use crate::envs::gridworld::{self, GridWorldSpec, GridWorldState};
use crate::envs::latent::{step_latent, LatentMDPSpec};
use crate::numerics::Real;
use crate::{Error, Result};

/// Episodic pixel environment. Frames are row-major grayscale in [0, 1] for
/// the gridworld and unnormalized floats for the latent family; dataset
/// statistics handle scaling downstream.
pub trait Environment {
    fn frame_h(&self) -> usize;
    fn frame_w(&self) -> usize;
    fn action_count(&self) -> usize;
    fn horizon(&self) -> usize;
    /// Reset with an episode seed and return the first observation.
    fn reset(&mut self, seed: u64) -> Vec<Real>;
    /// Apply an action; returns (observation, reward).
    fn step(&mut self, action: u16) -> Result<(Vec<Real>, Real)>;
    fn env_id(&self) -> &'static str;
}

// ── Gridworld adapter ──

pub struct GridWorldEnv {
    pub spec: GridWorldSpec,
    state: GridWorldState,
    episode_seed: u64,
}

impl GridWorldEnv {
    pub fn new(spec: GridWorldSpec) -> Result<Self> {
        spec.validate()?;
        let state = GridWorldState::reset(&spec);
        Ok(GridWorldEnv { spec, state, episode_seed: 0 })
    }

    pub fn state(&self) -> &GridWorldState {
        &self.state
    }
}

impl Environment for GridWorldEnv {
    fn frame_h(&self) -> usize {
        self.spec.frame_h()
    }

    fn frame_w(&self) -> usize {
        self.spec.frame_w()
    }

    fn action_count(&self) -> usize {
        gridworld::ACTION_COUNT
    }

    fn horizon(&self) -> usize {
        self.spec.horizon
    }

    fn reset(&mut self, seed: u64) -> Vec<Real> {
        self.episode_seed = seed;
        self.state = GridWorldState::reset(&self.spec);
        gridworld::render(&self.spec, &self.state, seed)
    }

    fn step(&mut self, action: u16) -> Result<(Vec<Real>, Real)> {
        let r = gridworld::step_gridworld(&self.spec, &mut self.state, action)?;
        Ok((gridworld::render(&self.spec, &self.state, self.episode_seed), r))
    }

    fn env_id(&self) -> &'static str {
        "keydoor"
    }
}

// ── Latent POMDP adapter ──

/// Embeds the observation vector into a square frame, zero padded.
pub struct LatentEnv {
    pub spec: LatentMDPSpec,
    g: Vec<Real>,
    r_prev: Real,
    step_count: usize,
    rng: ChaCha8Rng,
}

impl LatentEnv {
    pub fn new(spec: LatentMDPSpec) -> Result<Self> {
        spec.validate()?;
        let g = vec![0.0; spec.dims];
        Ok(LatentEnv { spec, g, r_prev: 0.0, step_count: 0, rng: ChaCha8Rng::seed_from_u64(0) })
    }

    fn embed(&self, obs: &[Real]) -> Vec<Real> {
        let side = self.spec.frame_side;
        let mut frame = vec![0.0; side * side];
        frame[..obs.len()].copy_from_slice(obs);
        frame
    }

    pub fn latent_state(&self) -> &[Real] {
        &self.g
    }
}

impl Environment for LatentEnv {
    fn frame_h(&self) -> usize {
        self.spec.frame_side
    }

    fn frame_w(&self) -> usize {
        self.spec.frame_side
    }

    fn action_count(&self) -> usize {
        self.spec.action_count
    }

    fn horizon(&self) -> usize {
        self.spec.horizon
    }

    fn reset(&mut self, seed: u64) -> Vec<Real> {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.g = self.spec.init_state(&mut self.rng);
        self.r_prev = 0.0;
        self.step_count = 0;
        // First observation reads the initial latent state directly.
        let mut obs = vec![0.0; self.spec.obs_dim];
        for k in 0..self.spec.obs_dim {
            let pre: Real = self.spec.w_obs[k].iter().zip(&self.g).map(|(w, x)| w * x).sum::<Real>()
                + self.spec.b_obs[k];
            obs[k] = self.spec.nonlinearity_apply(pre);
        }
        self.embed(&obs)
    }

    fn step(&mut self, action: u16) -> Result<(Vec<Real>, Real)> {
        let (g_next, obs, r) =
            step_latent(&self.spec, &self.g, action as usize, self.r_prev, &mut self.rng)?;
        self.g = g_next;
        self.r_prev = r;
        self.step_count += 1;
        Ok((self.embed(&obs), r))
    }

    fn env_id(&self) -> &'static str {
        "latent"
    }
}

impl LatentMDPSpec {
    fn nonlinearity_apply(&self, x: Real) -> Real {
        match self.nonlinearity {
            crate::envs::latent::Nonlinearity::Linear => x,
            crate::envs::latent::Nonlinearity::Tanh => x.tanh(),
        }
    }
}

// ── Behavior policies ──

/// Chooses the next action given the step index and the reward so far.
pub enum Policy {
    /// Uniformly random actions.
    Random,
    /// Fixed action sequence, truncated or cycled as needed.
    Scripted(Vec<u16>),
    /// Scripted with probability `1 - eps`, random otherwise, per step.
    EpsilonScripted { actions: Vec<u16>, eps: f64 },
}

impl Policy {
    fn pick(&self, step: usize, action_count: usize, rng: &mut impl Rng) -> u16 {
        match self {
            Policy::Random => rng.gen_range(0..action_count) as u16,
            Policy::Scripted(actions) => {
                if actions.is_empty() {
                    0
                } else {
                    actions[step % actions.len()]
                }
            }
            Policy::EpsilonScripted { actions, eps } => {
                // Draw the random fallback unconditionally so the RNG stream
                // does not depend on which branch is taken.
                let fallback = rng.gen_range(0..action_count) as u16;
                let explore = rng.gen_bool(*eps);
                if explore || actions.is_empty() {
                    fallback
                } else {
                    actions[step % actions.len()]
                }
            }
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Policy::Random => "random",
            Policy::Scripted(_) => "scripted",
            Policy::EpsilonScripted { .. } => "eps-scripted",
        }
    }
}

/// Run one fixed-length episode and package it as a trajectory. The frame at
/// index t is the observation the policy saw before acting at step t.
pub fn rollout(env: &mut dyn Environment, policy: &Policy, seed: u64) -> Result<Trajectory> {
    let horizon = env.horizon();
    if horizon == 0 {
        return Err(Error::Parameter("environment horizon must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5_5A5A_DEAD_BEEF);
    let mut frames = Vec::with_capacity(horizon * env.frame_h() * env.frame_w());
    let mut actions = Vec::with_capacity(horizon);
    let mut rewards = Vec::with_capacity(horizon);
    let mut obs = env.reset(seed);
    for t in 0..horizon {
        frames.extend_from_slice(&obs);
        let a = policy.pick(t, env.action_count(), &mut rng);
        let (next_obs, r) = env.step(a).map_err(|e| match e {
            Error::Parameter(d) => Error::Parameter(format!("step {t}: {d}")),
            other => other,
        })?;
        actions.push(a);
        rewards.push(r);
        obs = next_obs;
    }
    // Trailing observation: trajectories store T + 1 frames.
    frames.extend_from_slice(&obs);
    Trajectory::new(
        frames,
        env.frame_h(),
        env.frame_w(),
        actions,
        rewards,
        TrajectoryMeta { env_id: env.env_id().to_string(), seed, policy: policy.label().to_string() },
    )
}

/// Generate `n` episodes with consecutive seeds starting at `seed0`.
pub fn rollout_many(
    env: &mut dyn Environment,
    policy: &Policy,
    seed0: u64,
    n: usize,
) -> Result<Vec<Trajectory>> {
    (0..n).map(|i| rollout(env, policy, seed0 + i as u64)).collect()
}
