//! Synthetic latent-state POMDPs with explicit structural masks. Transition,
//! observation, and reward maps are affine with an optional tanh, weights are
//! exactly zero wherever the corresponding mask entry is zero, and the masked
//! transition matrix is rescaled for stability.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::numerics::Real;
use crate::{Error, Result};

/// Binary structural masks of one environment.
///
/// `c_gg[i][j] = 1` means latent j at step t feeds latent i at step t+1.
/// Vector masks follow the same orientation: `c_ag[i]` gates action into
/// latent i, `c_rg[i]` gates the previous reward into latent i, `c_go[j]`
/// exposes latent j to the observation, `c_gr[j]` feeds latent j into the
/// reward, and `c_ar` gates the direct action-to-reward edge.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuralMasks {
    pub c_gg: Vec<Vec<u8>>,
    pub c_ag: Vec<u8>,
    pub c_rg: Vec<u8>,
    pub c_go: Vec<u8>,
    pub c_gr: Vec<u8>,
    pub c_ar: u8,
}

impl StructuralMasks {
    pub fn dims(&self) -> usize {
        self.c_gg.len()
    }

    /// Shape and binariness only. Analysis code uses this form because it must
    /// accept degenerate masks (for example an all-zero `c_gr`) that a live
    /// environment would reject.
    pub fn validate_shape(&self) -> Result<()> {
        let d = self.dims();
        if d == 0 {
            return Err(Error::Parameter("masks need at least one latent dim".into()));
        }
        if self.c_gg.iter().any(|row| row.len() != d) {
            return Err(Error::Parameter("c_gg must be square".into()));
        }
        for (name, v) in
            [("c_ag", &self.c_ag), ("c_rg", &self.c_rg), ("c_go", &self.c_go), ("c_gr", &self.c_gr)]
        {
            if v.len() != d {
                return Err(Error::Parameter(format!("{name} has {} entries for {d} dims", v.len())));
            }
        }
        let binary = self
            .c_gg
            .iter()
            .flatten()
            .chain(&self.c_ag)
            .chain(&self.c_rg)
            .chain(&self.c_go)
            .chain(&self.c_gr)
            .chain(std::iter::once(&self.c_ar))
            .all(|&b| b <= 1);
        if !binary {
            return Err(Error::Parameter("mask entries must be 0 or 1".into()));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_shape()?;
        if !self.c_gr.contains(&1) {
            return Err(Error::Parameter("reward unreachable: every c_gr entry is zero".into()));
        }
        Ok(())
    }
}

/// Transition/observation/reward nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Nonlinearity {
    Linear,
    Tanh,
}

impl Nonlinearity {
    pub fn apply(self, x: Real) -> Real {
        match self {
            Nonlinearity::Linear => x,
            Nonlinearity::Tanh => x.tanh(),
        }
    }
}

/// Fully specified latent POMDP. Serializes to JSON with exact float
/// round-trip (shortest-representation formatting).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentMDPSpec {
    pub dims: usize,
    pub action_count: usize,
    pub obs_dim: usize,
    pub horizon: usize,
    pub gamma: Real,
    pub masks: StructuralMasks,
    pub w_gg: Vec<Vec<Real>>,
    pub w_ag: Vec<Vec<Real>>,
    pub w_rg: Vec<Real>,
    pub b_g: Vec<Real>,
    pub w_obs: Vec<Vec<Real>>,
    pub b_obs: Vec<Real>,
    pub w_gr: Vec<Real>,
    pub w_ar: Vec<Real>,
    pub b_r: Real,
    pub noise_g: Real,
    pub noise_obs: Real,
    pub noise_r: Real,
    pub nonlinearity: Nonlinearity,
    /// Initial latent state standard deviation.
    pub init_scale: Real,
    /// Side length of the square frame the observation vector is embedded in
    /// when the environment is consumed through the pixel interface.
    pub frame_side: usize,
}

impl LatentMDPSpec {
    pub fn validate(&self) -> Result<()> {
        self.masks.validate()?;
        let d = self.dims;
        if self.masks.dims() != d {
            return Err(Error::Parameter("mask dims disagree with spec dims".into()));
        }
        if self.action_count < 2 {
            return Err(Error::Parameter("need at least two actions".into()));
        }
        if self.obs_dim == 0 || self.frame_side * self.frame_side < self.obs_dim {
            return Err(Error::Parameter(format!(
                "obs_dim {} does not fit frame side {}",
                self.obs_dim, self.frame_side
            )));
        }
        let shapes_ok = self.w_gg.len() == d
            && self.w_gg.iter().all(|r| r.len() == d)
            && self.w_ag.len() == d
            && self.w_ag.iter().all(|r| r.len() == self.action_count)
            && self.w_rg.len() == d
            && self.b_g.len() == d
            && self.w_obs.len() == self.obs_dim
            && self.w_obs.iter().all(|r| r.len() == d)
            && self.b_obs.len() == self.obs_dim
            && self.w_gr.len() == d
            && self.w_ar.len() == self.action_count;
        if !shapes_ok {
            return Err(Error::Parameter("weight shapes disagree with dims".into()));
        }
        // Zero weight wherever the mask is zero.
        for i in 0..d {
            for j in 0..d {
                if self.masks.c_gg[i][j] == 0 && self.w_gg[i][j] != 0.0 {
                    return Err(Error::Parameter(format!("w_gg[{i}][{j}] nonzero under zero mask")));
                }
            }
            if self.masks.c_ag[i] == 0 && self.w_ag[i].iter().any(|&v| v != 0.0) {
                return Err(Error::Parameter(format!("w_ag[{i}] nonzero under zero mask")));
            }
            if self.masks.c_rg[i] == 0 && self.w_rg[i] != 0.0 {
                return Err(Error::Parameter(format!("w_rg[{i}] nonzero under zero mask")));
            }
            if self.masks.c_gr[i] == 0 && self.w_gr[i] != 0.0 {
                return Err(Error::Parameter(format!("w_gr[{i}] nonzero under zero mask")));
            }
        }
        for j in 0..d {
            if self.masks.c_go[j] == 0 {
                for k in 0..self.obs_dim {
                    if self.w_obs[k][j] != 0.0 {
                        return Err(Error::Parameter(format!(
                            "w_obs[{k}][{j}] nonzero under zero mask"
                        )));
                    }
                }
            }
        }
        if self.masks.c_ar == 0 && self.w_ar.iter().any(|&v| v != 0.0) {
            return Err(Error::Parameter("w_ar nonzero under zero mask".into()));
        }
        // Stability: infinity norm of the masked transition matrix bounds its
        // spectral radius below 1.
        let norm = inf_norm(&self.w_gg);
        if norm >= 1.0 {
            return Err(Error::Parameter(format!(
                "masked transition matrix norm {norm} allows spectral radius >= 1"
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| Error::Parameter(format!("spec serialization failed: {e}")))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let spec: LatentMDPSpec = serde_json::from_str(s)
            .map_err(|e| Error::Format { offset: 0, detail: format!("malformed spec JSON: {e}") })?;
        spec.validate()?;
        Ok(spec)
    }

    /// Draw an initial latent state.
    pub fn init_state(&self, rng: &mut impl Rng) -> Vec<Real> {
        (0..self.dims).map(|_| self.init_scale * rng.sample::<Real, _>(StandardNormal)).collect()
    }

    /// Noise-free expected immediate reward for (state, action).
    pub fn reward_map(&self, g: &[Real], a: usize) -> Real {
        let pre: Real =
            self.w_gr.iter().zip(g).map(|(w, x)| w * x).sum::<Real>() + self.w_ar[a] + self.b_r;
        self.nonlinearity.apply(pre)
    }
}

fn inf_norm(m: &[Vec<Real>]) -> Real {
    m.iter().map(|row| row.iter().map(|v| v.abs()).sum::<Real>()).fold(0.0, Real::max)
}

/// Generation knobs for random specs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LatentGenConfig {
    pub dims: usize,
    pub density: f64,
    pub noise: Real,
    pub action_count: usize,
    pub horizon: usize,
    pub gamma: Real,
    pub nonlinearity: Nonlinearity,
}

impl Default for LatentGenConfig {
    fn default() -> Self {
        LatentGenConfig {
            dims: 4,
            density: 0.5,
            noise: 0.1,
            action_count: 2,
            horizon: 50,
            gamma: 0.99,
            nonlinearity: Nonlinearity::Linear,
        }
    }
}

/// Sample a random spec: masks at the given density, repaired so the reward
/// is reachable and (for d >= 3) the last dimension is provably non-compact
/// (every outgoing mask entry cleared); weights uniform in +-[0.3, 1.0] on
/// surviving edges; transition matrix rescaled to infinity norm <= 0.9.
/// Identical seeds produce identical specs.
pub fn make_latent_mdp(cfg: &LatentGenConfig, seed: u64) -> Result<LatentMDPSpec> {
    if cfg.dims == 0 {
        return Err(Error::Parameter("dims must be positive".into()));
    }
    if !(0.0..=1.0).contains(&cfg.density) || cfg.density == 0.0 {
        return Err(Error::Parameter(format!("density {} outside (0, 1]", cfg.density)));
    }
    if cfg.action_count < 2 {
        return Err(Error::Parameter("need at least two actions".into()));
    }
    let d = cfg.dims;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bern = |rng: &mut ChaCha8Rng| u8::from(rng.gen_range(0.0..1.0) < cfg.density);

    let mut masks = StructuralMasks {
        c_gg: (0..d).map(|_| (0..d).map(|_| bern(&mut rng)).collect()).collect(),
        c_ag: (0..d).map(|_| bern(&mut rng)).collect(),
        c_rg: (0..d).map(|_| bern(&mut rng)).collect(),
        c_go: (0..d).map(|_| bern(&mut rng)).collect(),
        c_gr: (0..d).map(|_| bern(&mut rng)).collect(),
        c_ar: bern(&mut rng),
    };
    if d >= 3 {
        // Reserve the last dimension as a sink with no outgoing edges.
        let sink = d - 1;
        masks.c_go[sink] = 0;
        masks.c_gr[sink] = 0;
        for i in 0..d {
            masks.c_gg[i][sink] = 0;
        }
    }
    let repair_limit = if d >= 3 { d - 1 } else { d };
    if !masks.c_gr[..repair_limit].contains(&1) {
        let i = rng.gen_range(0..repair_limit);
        masks.c_gr[i] = 1;
    }
    if !masks.c_go[..repair_limit].contains(&1) {
        let i = rng.gen_range(0..repair_limit);
        masks.c_go[i] = 1;
    }

    let wsample = |rng: &mut ChaCha8Rng| {
        let mag: Real = rng.gen_range(0.3..1.0);
        if rng.gen_bool(0.5) {
            mag
        } else {
            -mag
        }
    };
    let mut w_gg: Vec<Vec<Real>> = (0..d)
        .map(|i| {
            (0..d)
                .map(|j| if masks.c_gg[i][j] == 1 { wsample(&mut rng) } else { 0.0 })
                .collect()
        })
        .collect();
    let norm = inf_norm(&w_gg);
    if norm > 0.9 {
        let s = 0.9 / norm;
        for row in &mut w_gg {
            for v in row {
                *v *= s;
            }
        }
    }
    let w_ag: Vec<Vec<Real>> = (0..d)
        .map(|i| {
            (0..cfg.action_count)
                .map(|_| if masks.c_ag[i] == 1 { wsample(&mut rng) } else { 0.0 })
                .collect()
        })
        .collect();
    let w_rg: Vec<Real> =
        (0..d).map(|i| if masks.c_rg[i] == 1 { 0.3 * wsample(&mut rng) } else { 0.0 }).collect();
    let b_g: Vec<Real> = (0..d).map(|_| rng.gen_range(-0.1..0.1)).collect();
    let obs_dim = d;
    let w_obs: Vec<Vec<Real>> = (0..obs_dim)
        .map(|_| {
            (0..d)
                .map(|j| if masks.c_go[j] == 1 { wsample(&mut rng) } else { 0.0 })
                .collect()
        })
        .collect();
    let b_obs: Vec<Real> = (0..obs_dim).map(|_| rng.gen_range(-0.1..0.1)).collect();
    let w_gr: Vec<Real> =
        (0..d).map(|i| if masks.c_gr[i] == 1 { wsample(&mut rng) } else { 0.0 }).collect();
    let w_ar: Vec<Real> = (0..cfg.action_count)
        .map(|_| if masks.c_ar == 1 { wsample(&mut rng) } else { 0.0 })
        .collect();

    let spec = LatentMDPSpec {
        dims: d,
        action_count: cfg.action_count,
        obs_dim,
        horizon: cfg.horizon,
        gamma: cfg.gamma,
        masks,
        w_gg,
        w_ag,
        w_rg,
        b_g,
        w_obs,
        b_obs,
        w_gr,
        w_ar,
        b_r: rng.gen_range(-0.2..0.2),
        noise_g: cfg.noise,
        noise_obs: cfg.noise,
        noise_r: cfg.noise,
        nonlinearity: cfg.nonlinearity,
        init_scale: 0.5,
        frame_side: frame_side_for(d),
    };
    spec.validate()?;
    Ok(spec)
}

/// Smallest side length that fits the observation vector and supports the
/// two-layer stride-2 conv encoder (side >= 7).
pub fn frame_side_for(obs_dim: usize) -> usize {
    let mut side = 7;
    while side * side < obs_dim {
        side += 1;
    }
    side
}

/// One transition. Reward is emitted from the current (state, action) pair;
/// the previous reward `r_prev` feeds the transition through `c_rg`.
/// Noise draw order per step: reward, latent dims (ascending), observation
/// dims (ascending); draws happen even at zero noise scale so trajectories
/// with different noise settings stay aligned per seed.
pub fn step_latent(
    spec: &LatentMDPSpec,
    g: &[Real],
    a: usize,
    r_prev: Real,
    rng: &mut impl Rng,
) -> Result<(Vec<Real>, Vec<Real>, Real)> {
    if g.len() != spec.dims {
        return Err(Error::dim("step_latent", format!("state has {} dims, spec {}", g.len(), spec.dims)));
    }
    if a >= spec.action_count {
        return Err(Error::Parameter(format!(
            "action {a} out of range (spec has {})",
            spec.action_count
        )));
    }
    let nl = spec.nonlinearity;
    let reward = {
        let pre: Real =
            spec.w_gr.iter().zip(g).map(|(w, x)| w * x).sum::<Real>() + spec.w_ar[a] + spec.b_r;
        nl.apply(pre) + spec.noise_r * rng.sample::<Real, _>(StandardNormal)
    };
    let mut g_next = vec![0.0; spec.dims];
    for i in 0..spec.dims {
        let pre: Real = spec.w_gg[i].iter().zip(g).map(|(w, x)| w * x).sum::<Real>()
            + spec.w_ag[i][a]
            + spec.w_rg[i] * r_prev
            + spec.b_g[i];
        g_next[i] = nl.apply(pre) + spec.noise_g * rng.sample::<Real, _>(StandardNormal);
    }
    let mut obs = vec![0.0; spec.obs_dim];
    for k in 0..spec.obs_dim {
        let pre: Real =
            spec.w_obs[k].iter().zip(&g_next).map(|(w, x)| w * x).sum::<Real>() + spec.b_obs[k];
        obs[k] = nl.apply(pre) + spec.noise_obs * rng.sample::<Real, _>(StandardNormal);
    }
    Ok((g_next, obs, reward))
}

/// A raw latent-space rollout used by identification and the pruning oracle.
#[derive(Debug, Clone)]
pub struct LatentRollout {
    /// `steps + 1` latent states.
    pub states: Vec<Vec<Real>>,
    pub actions: Vec<usize>,
    /// Reward emitted at each step.
    pub rewards: Vec<Real>,
    /// Reward fed into each transition (shifted by one, 0.0 at the start).
    pub rewards_prev: Vec<Real>,
    /// Observation emitted by each step; `observations[s]` reveals
    /// `states[s + 1]`.
    pub observations: Vec<Vec<Real>>,
}

/// Roll the latent dynamics with uniformly random actions.
pub fn rollout_latent_random(
    spec: &LatentMDPSpec,
    steps: usize,
    seed: u64,
) -> Result<LatentRollout> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = spec.init_state(&mut rng);
    let mut r_prev = 0.0;
    let mut out = LatentRollout {
        states: vec![g.clone()],
        actions: Vec::with_capacity(steps),
        rewards: Vec::with_capacity(steps),
        rewards_prev: Vec::with_capacity(steps),
        observations: Vec::with_capacity(steps),
    };
    for _ in 0..steps {
        let a = rng.gen_range(0..spec.action_count);
        let (g_next, obs, r) = step_latent(spec, &g, a, r_prev, &mut rng)?;
        out.actions.push(a);
        out.rewards.push(r);
        out.rewards_prev.push(r_prev);
        out.observations.push(obs);
        r_prev = r;
        g = g_next;
        out.states.push(g.clone());
    }
    Ok(out)
}
