//! `eval`: greedy evaluation of a checkpoint over several seeds, aggregating
//! episode returns and mask keep ratios. The seed-loop helper is shared with
//! `sweep`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use adacred_core::envs::rollout::{Environment, GridWorldEnv, LatentEnv};
use adacred_core::envs::{GridWorldSpec, LatentMDPSpec};
use adacred_core::model::{load_checkpoint, AdaCredModel, MaskPolicy};
use adacred_core::training::{evaluate, EvalConfig};
use adacred_core::{Error, Real, Result};

use crate::config::{apply_file, parse_bool, parse_val, KvFile};
use crate::manifest::RunManifest;
use crate::opts::EvalFlags;
use crate::RunSummary;

pub const EVAL_CSV: &str = "eval.csv";
pub const EVAL_JSON: &str = "eval.json";
pub const EVAL_HEADER: &str =
    "seed,episodes,mean_return,std_return,mean_keep_spatial,mean_keep_temporal";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedEval {
    pub ckpt: std::path::PathBuf,
    pub env: String,
    pub env_spec: Option<std::path::PathBuf>,
    pub episodes: usize,
    pub seeds: usize,
    pub seed: u64,
    pub gates: String,
    pub target_return: Real,
    pub imitation: bool,
}

impl Default for ResolvedEval {
    fn default() -> Self {
        ResolvedEval {
            ckpt: std::path::PathBuf::new(),
            env: "keydoor".into(),
            env_spec: None,
            episodes: 10,
            seeds: 10,
            seed: 0,
            gates: "eval".into(),
            target_return: 1.0,
            imitation: false,
        }
    }
}

fn apply_kv(cfg: &mut ResolvedEval, key: &str, value: &str) -> Result<()> {
    match key {
        "ckpt" => cfg.ckpt = value.into(),
        "env" => cfg.env = value.into(),
        "env-spec" => cfg.env_spec = Some(value.into()),
        "episodes" => cfg.episodes = parse_val(key, value)?,
        "seeds" => cfg.seeds = parse_val(key, value)?,
        "seed" => cfg.seed = parse_val(key, value)?,
        "gates" => cfg.gates = value.into(),
        "target-return" => cfg.target_return = parse_val(key, value)?,
        "imitation" => cfg.imitation = parse_bool(key, value)?,
        _ => return Err(Error::Parameter(format!("unknown eval key {key:?}"))),
    }
    Ok(())
}

pub fn resolve(
    flags: &EvalFlags,
    file: Option<&KvFile>,
    env_seed: Option<u64>,
) -> Result<ResolvedEval> {
    let mut cfg = ResolvedEval::default();
    apply_file(file, |k, v| apply_kv(&mut cfg, k, v))?;
    if let Some(x) = &flags.ckpt {
        cfg.ckpt = x.clone();
    }
    if let Some(x) = &flags.env {
        cfg.env = x.clone();
    }
    if let Some(x) = &flags.env_spec {
        cfg.env_spec = Some(x.clone());
    }
    if let Some(x) = flags.episodes {
        cfg.episodes = x;
    }
    if let Some(x) = flags.seeds {
        cfg.seeds = x;
    }
    if let Some(x) = flags.seed {
        cfg.seed = x;
    }
    if let Some(x) = &flags.gates {
        cfg.gates = x.clone();
    }
    if let Some(x) = flags.target_return {
        cfg.target_return = x;
    }
    if flags.imitation {
        cfg.imitation = true;
    }
    if let Some(s) = env_seed {
        cfg.seed = s;
    }

    if cfg.ckpt.as_os_str().is_empty() {
        return Err(Error::Parameter("--ckpt is required".into()));
    }
    if cfg.episodes == 0 || cfg.seeds == 0 {
        return Err(Error::Parameter("episodes and seeds must be positive".into()));
    }
    Ok(cfg)
}

// ── Shared helpers ─────────────────────────────────────────────────────────

/// Environment by name; latent needs the generating spec JSON.
pub(crate) fn build_env(
    name: &str,
    env_spec: Option<&Path>,
    manifest: &mut RunManifest,
) -> Result<Box<dyn Environment>> {
    match name {
        "keydoor" => Ok(Box::new(GridWorldEnv::new(GridWorldSpec::desk())?)),
        "keydoor-paper" => Ok(Box::new(GridWorldEnv::new(GridWorldSpec::paper())?)),
        "latent" => {
            let path = env_spec.ok_or_else(|| {
                Error::Contract(
                    "the latent environment needs --env-spec (written by gen-data)".into(),
                )
            })?;
            manifest.stamp_input(path)?;
            let spec: LatentMDPSpec =
                serde_json::from_slice(&fs::read(path)?).map_err(|e| Error::Format {
                    offset: 0,
                    detail: format!("latent spec {}: {e}", path.display()),
                })?;
            Ok(Box::new(LatentEnv::new(spec)?))
        }
        other => Err(Error::Parameter(format!(
            "unknown environment {other:?} (keydoor, keydoor-paper, latent)"
        ))),
    }
}

pub(crate) fn gate_policy(name: &str) -> Result<MaskPolicy> {
    match name {
        "eval" => Ok(MaskPolicy::Eval),
        "on" => Ok(MaskPolicy::ForceOn),
        "off" => Ok(MaskPolicy::Off),
        other => Err(Error::Parameter(format!("unknown gate policy {other:?} (eval, on, off)"))),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedStats {
    pub seed: u64,
    pub mean: Real,
    pub std: Real,
    pub returns: Vec<Real>,
    pub keep_spatial: Real,
    pub keep_temporal: Real,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AggregateEval {
    pub per_seed: Vec<SeedStats>,
    /// Pooled over every episode of every seed.
    pub mean: Real,
    pub std: Real,
    pub episodes: usize,
    pub mean_keep_spatial: Real,
    pub mean_keep_temporal: Real,
}

/// Evaluate `seeds` independent seed groups of `episodes` episodes each.
/// Seed groups are spaced so episode seeds never collide across groups.
pub(crate) fn eval_seeds(
    model: &AdaCredModel,
    env: &mut dyn Environment,
    policy: &MaskPolicy,
    episodes: usize,
    seeds: usize,
    seed0: u64,
    target_return: Real,
    imitation: bool,
) -> Result<AggregateEval> {
    let mut per_seed = Vec::with_capacity(seeds);
    for s in 0..seeds {
        let ec = EvalConfig {
            episodes,
            target_return,
            imitation,
            seed: seed0 + s as u64 * 10_000,
        };
        let rep = evaluate(model, env, policy, &ec)?;
        per_seed.push(SeedStats {
            seed: ec.seed,
            mean: rep.mean,
            std: rep.std,
            returns: rep.returns,
            keep_spatial: rep.mean_keep_spatial,
            keep_temporal: rep.mean_keep_temporal,
        });
    }
    let all: Vec<Real> = per_seed.iter().flat_map(|s| s.returns.iter().copied()).collect();
    let n = all.len() as Real;
    let mean = all.iter().sum::<Real>() / n;
    let std = if all.len() > 1 {
        (all.iter().map(|r| (r - mean) * (r - mean)).sum::<Real>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let ks = per_seed.iter().map(|s| s.keep_spatial).sum::<Real>() / per_seed.len() as Real;
    let kt = per_seed.iter().map(|s| s.keep_temporal).sum::<Real>() / per_seed.len() as Real;
    Ok(AggregateEval {
        per_seed,
        mean,
        std,
        episodes: all.len(),
        mean_keep_spatial: ks,
        mean_keep_temporal: kt,
    })
}

pub(crate) fn eval_csv(agg: &AggregateEval) -> String {
    use std::fmt::Write as _;
    let mut out = String::from(EVAL_HEADER);
    out.push('\n');
    for s in &agg.per_seed {
        let _ = writeln!(
            out,
            "{},{},{:.6},{:.6},{:.6},{:.6}",
            s.seed,
            s.returns.len(),
            s.mean,
            s.std,
            s.keep_spatial,
            s.keep_temporal
        );
    }
    out
}

pub fn run(cfg: &ResolvedEval, out: &Path) -> Result<RunSummary> {
    fs::create_dir_all(out)?;
    let mut manifest = RunManifest::new("eval", cfg.seed, cfg)?;
    let ckpt = load_checkpoint(&cfg.ckpt)?;
    manifest.stamp_input(&cfg.ckpt)?;
    let model = AdaCredModel::from_parts(ckpt.config, ckpt.params)?;
    let mut env = build_env(&cfg.env, cfg.env_spec.as_deref(), &mut manifest)?;
    let policy = gate_policy(&cfg.gates)?;

    let agg = eval_seeds(
        &model,
        env.as_mut(),
        &policy,
        cfg.episodes,
        cfg.seeds,
        cfg.seed,
        cfg.target_return,
        cfg.imitation,
    )?;
    fs::write(out.join(EVAL_CSV), eval_csv(&agg))?;
    fs::write(out.join(EVAL_JSON), super::to_json_pretty(&agg)?)?;
    manifest.stamp_artifact(out, EVAL_CSV)?;
    manifest.stamp_artifact(out, EVAL_JSON)?;
    let manifest_path = manifest.write(out)?;

    let lines = vec![
        format!(
            "mean return {:.3} +- {:.3} over {} episodes ({} seeds)",
            agg.mean, agg.std, agg.episodes, cfg.seeds
        ),
        format!(
            "keep ratios: spatial {:.3}, temporal {:.3} (gates {})",
            agg.mean_keep_spatial, agg.mean_keep_temporal, cfg.gates
        ),
    ];
    Ok(RunSummary { lines, manifest_path: Some(manifest_path) })
}
