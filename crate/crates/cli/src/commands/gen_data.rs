//! `gen-data`: roll episodes with a behavior policy and store them in the
//! dataset container. The latent environment also writes its generating spec
//! as JSON so evaluation can rebuild the exact dynamics.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use adacred_core::dataset::OfflineDataset;
use adacred_core::envs::gridworld::scripted_optimal;
use adacred_core::envs::rollout::{rollout_many, Environment, GridWorldEnv, LatentEnv, Policy};
use adacred_core::envs::{make_latent_mdp, GridWorldSpec, LatentGenConfig};
use adacred_core::{Error, Real, Result};

use crate::config::{apply_file, parse_bool, parse_val, KvFile};
use crate::manifest::RunManifest;
use crate::opts::GenDataFlags;
use crate::RunSummary;

pub const LATENT_SPEC_FILE: &str = "latent_spec.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedGenData {
    pub env: String,
    pub episodes: usize,
    /// Resolved from the environment when not set: mixed for the gridworlds,
    /// random for the latent family (which has no scripted path to mix in).
    pub policy: String,
    /// Per-step exploration probability of the mixed policy.
    pub explore: f64,
    pub gamma: Real,
    pub imitation: bool,
    pub seed: u64,
    pub file: String,
    pub latent_dims: usize,
    pub latent_actions: usize,
    pub latent_noise: Real,
    pub latent_horizon: usize,
}

impl Default for ResolvedGenData {
    fn default() -> Self {
        ResolvedGenData {
            env: String::new(),
            episodes: 200,
            policy: String::new(),
            explore: 0.35,
            gamma: 1.0,
            imitation: false,
            seed: 0,
            file: "dataset.adcr".into(),
            latent_dims: 4,
            latent_actions: 3,
            latent_noise: 0.1,
            latent_horizon: 20,
        }
    }
}

fn apply_kv(cfg: &mut ResolvedGenData, key: &str, value: &str) -> Result<()> {
    match key {
        "env" => cfg.env = value.into(),
        "episodes" => cfg.episodes = parse_val(key, value)?,
        "policy" => cfg.policy = value.into(),
        "explore" => cfg.explore = parse_val(key, value)?,
        "gamma" => cfg.gamma = parse_val(key, value)?,
        "imitation" => cfg.imitation = parse_bool(key, value)?,
        "seed" => cfg.seed = parse_val(key, value)?,
        "file" => cfg.file = value.into(),
        "latent-dims" => cfg.latent_dims = parse_val(key, value)?,
        "latent-actions" => cfg.latent_actions = parse_val(key, value)?,
        "latent-noise" => cfg.latent_noise = parse_val(key, value)?,
        "latent-horizon" => cfg.latent_horizon = parse_val(key, value)?,
        _ => return Err(Error::Parameter(format!("unknown gen-data key {key:?}"))),
    }
    Ok(())
}

pub fn resolve(
    flags: &GenDataFlags,
    file: Option<&KvFile>,
    env_seed: Option<u64>,
) -> Result<ResolvedGenData> {
    let mut cfg = ResolvedGenData::default();
    apply_file(file, |k, v| apply_kv(&mut cfg, k, v))?;
    if let Some(x) = &flags.env {
        cfg.env = x.clone();
    }
    if let Some(x) = flags.episodes {
        cfg.episodes = x;
    }
    if let Some(x) = &flags.policy {
        cfg.policy = x.clone();
    }
    if let Some(x) = flags.explore {
        cfg.explore = x;
    }
    if let Some(x) = flags.gamma {
        cfg.gamma = x;
    }
    if flags.imitation {
        cfg.imitation = true;
    }
    if let Some(x) = flags.seed {
        cfg.seed = x;
    }
    if let Some(x) = &flags.file {
        cfg.file = x.clone();
    }
    if let Some(x) = flags.latent_dims {
        cfg.latent_dims = x;
    }
    if let Some(x) = flags.latent_actions {
        cfg.latent_actions = x;
    }
    if let Some(x) = flags.latent_noise {
        cfg.latent_noise = x;
    }
    if let Some(x) = flags.latent_horizon {
        cfg.latent_horizon = x;
    }
    if let Some(s) = env_seed {
        cfg.seed = s;
    }

    if cfg.env.is_empty() {
        return Err(Error::Parameter("--env is required (keydoor, keydoor-paper, latent)".into()));
    }
    if cfg.policy.is_empty() {
        cfg.policy = if cfg.env == "latent" { "random" } else { "mixed" }.into();
    }
    if !(0.0..=1.0).contains(&cfg.explore) {
        return Err(Error::Parameter(format!("explore {} outside [0, 1]", cfg.explore)));
    }
    if !(cfg.gamma > 0.0 && cfg.gamma <= 1.0) {
        return Err(Error::Parameter(format!("gamma {} outside (0, 1]", cfg.gamma)));
    }
    Ok(cfg)
}

pub fn run(cfg: &ResolvedGenData, out: &Path) -> Result<RunSummary> {
    fs::create_dir_all(out)?;
    let mut manifest = RunManifest::new("gen-data", cfg.seed, cfg)?;

    // The scripted path exists only for the gridworld flavors.
    let (mut env, scripted): (Box<dyn Environment>, Option<Vec<u16>>) = match cfg.env.as_str() {
        "keydoor" => {
            let spec = GridWorldSpec::desk();
            let path = scripted_optimal(&spec);
            (Box::new(GridWorldEnv::new(spec)?), path)
        }
        "keydoor-paper" => {
            let spec = GridWorldSpec::paper();
            let path = scripted_optimal(&spec);
            (Box::new(GridWorldEnv::new(spec)?), path)
        }
        "latent" => {
            let gen = LatentGenConfig {
                dims: cfg.latent_dims,
                noise: cfg.latent_noise,
                action_count: cfg.latent_actions,
                horizon: cfg.latent_horizon,
                ..LatentGenConfig::default()
            };
            let spec = make_latent_mdp(&gen, cfg.seed)?;
            fs::write(out.join(LATENT_SPEC_FILE), super::to_json_pretty(&spec)?)?;
            (Box::new(LatentEnv::new(spec)?), None)
        }
        other => {
            return Err(Error::Parameter(format!(
                "unknown environment {other:?} (keydoor, keydoor-paper, latent)"
            )))
        }
    };

    let policy = match cfg.policy.as_str() {
        "random" => Policy::Random,
        "scripted" => Policy::Scripted(scripted.ok_or_else(|| {
            Error::Parameter("the scripted policy needs a key-door environment".into())
        })?),
        "mixed" => Policy::EpsilonScripted {
            actions: scripted.ok_or_else(|| {
                Error::Parameter("the mixed policy needs a key-door environment".into())
            })?,
            eps: cfg.explore,
        },
        other => {
            return Err(Error::Parameter(format!(
                "unknown policy {other:?} (random, scripted, mixed)"
            )))
        }
    };

    let trajectories = rollout_many(env.as_mut(), &policy, cfg.seed, cfg.episodes)?;
    let mean_return = if trajectories.is_empty() {
        0.0
    } else {
        trajectories.iter().map(|t| t.rewards.iter().sum::<Real>()).sum::<Real>()
            / trajectories.len() as Real
    };
    let count = trajectories.len();
    let dataset = OfflineDataset::new(trajectories, cfg.gamma, cfg.imitation)?;
    dataset.write(&out.join(&cfg.file))?;

    manifest.stamp_artifact(out, &cfg.file)?;
    if cfg.env == "latent" {
        manifest.stamp_artifact(out, LATENT_SPEC_FILE)?;
    }
    let manifest_path = manifest.write(out)?;

    let mut lines = vec![
        format!("wrote {count} trajectories ({}) to {}", cfg.policy, out.join(&cfg.file).display()),
        format!("mean return {mean_return:.3}"),
    ];
    if cfg.imitation {
        lines.push("rewards zeroed in the stored dataset (imitation mode)".into());
    }
    Ok(RunSummary { lines, manifest_path: Some(manifest_path) })
}
