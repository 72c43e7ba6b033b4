//! `causal`: generate a latent MDP spec from the seed, then run structure
//! identification from random rollouts and/or the exact pruning-invariance
//! check, and write one JSON report.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use adacred_core::causal::{
    compact_partition, identify_relaxed, identify_structure, mask_f1, minimal_sufficient_set,
    prune_invariance_check, IdentifyConfig, RelaxedOptions,
};
use adacred_core::envs::{
    make_latent_mdp, rollout_latent_random, LatentGenConfig, Nonlinearity, StructuralMasks,
};
use adacred_core::{Error, Real, Result};

use crate::config::{apply_file, parse_bool, parse_val, KvFile};
use crate::manifest::RunManifest;
use crate::opts::CausalFlags;
use crate::RunSummary;

pub const REPORT_FILE: &str = "causal_report.json";

/// Rollout length used when chunking the requested transition count.
const ROLLOUT_STEPS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedCausal {
    pub identify: bool,
    pub prune_check: bool,
    pub d: usize,
    pub actions: usize,
    pub noise: Real,
    pub density: f64,
    pub nonlinearity: String,
    pub transitions: usize,
    pub horizon: usize,
    pub samples: usize,
    pub lambda: f64,
    pub threshold: f64,
    pub seed: u64,
}

impl Default for ResolvedCausal {
    fn default() -> Self {
        ResolvedCausal {
            identify: false,
            prune_check: false,
            d: 4,
            actions: 3,
            noise: 0.1,
            density: 0.5,
            nonlinearity: "linear".into(),
            transitions: 10_000,
            horizon: 4,
            samples: 50,
            lambda: 0.0,
            threshold: 0.05,
            seed: 0,
        }
    }
}

fn apply_kv(cfg: &mut ResolvedCausal, key: &str, value: &str) -> Result<()> {
    match key {
        "identify" => cfg.identify = parse_bool(key, value)?,
        "prune-check" => cfg.prune_check = parse_bool(key, value)?,
        "d" => cfg.d = parse_val(key, value)?,
        "actions" => cfg.actions = parse_val(key, value)?,
        "noise" => cfg.noise = parse_val(key, value)?,
        "density" => cfg.density = parse_val(key, value)?,
        "nonlinearity" => cfg.nonlinearity = value.into(),
        "transitions" => cfg.transitions = parse_val(key, value)?,
        "horizon" => cfg.horizon = parse_val(key, value)?,
        "samples" => cfg.samples = parse_val(key, value)?,
        "lambda" => cfg.lambda = parse_val(key, value)?,
        "threshold" => cfg.threshold = parse_val(key, value)?,
        "seed" => cfg.seed = parse_val(key, value)?,
        _ => return Err(Error::Parameter(format!("unknown causal key {key:?}"))),
    }
    Ok(())
}

pub fn resolve(
    flags: &CausalFlags,
    file: Option<&KvFile>,
    env_seed: Option<u64>,
) -> Result<ResolvedCausal> {
    let mut cfg = ResolvedCausal::default();
    apply_file(file, |k, v| apply_kv(&mut cfg, k, v))?;
    if flags.identify {
        cfg.identify = true;
    }
    if flags.prune_check {
        cfg.prune_check = true;
    }
    if let Some(x) = flags.d {
        cfg.d = x;
    }
    if let Some(x) = flags.actions {
        cfg.actions = x;
    }
    if let Some(x) = flags.noise {
        cfg.noise = x;
    }
    if let Some(x) = flags.density {
        cfg.density = x;
    }
    if let Some(x) = &flags.nonlinearity {
        cfg.nonlinearity = x.clone();
    }
    if let Some(x) = flags.transitions {
        cfg.transitions = x;
    }
    if let Some(x) = flags.horizon {
        cfg.horizon = x;
    }
    if let Some(x) = flags.samples {
        cfg.samples = x;
    }
    if let Some(x) = flags.lambda {
        cfg.lambda = x;
    }
    if let Some(x) = flags.threshold {
        cfg.threshold = x;
    }
    if let Some(x) = flags.seed {
        cfg.seed = x;
    }
    if let Some(s) = env_seed {
        cfg.seed = s;
    }

    if !cfg.identify && !cfg.prune_check {
        return Err(Error::Parameter("pass --identify and/or --prune-check".into()));
    }
    Ok(cfg)
}

#[derive(Debug, Serialize)]
struct IdentifySection {
    transitions: usize,
    tests: usize,
    alpha_adjusted: f64,
    f1: Real,
    masks: StructuralMasks,
    relaxed: Option<RelaxedSection>,
}

#[derive(Debug, Serialize)]
struct RelaxedSection {
    lambda: f64,
    threshold: f64,
    f1: Real,
    masks: StructuralMasks,
}

#[derive(Debug, Serialize)]
struct PruneSection {
    pruned: Vec<usize>,
    horizon: usize,
    samples: usize,
    disagreements: usize,
    fraction: Real,
}

#[derive(Debug, Serialize)]
struct CausalReport {
    dims: usize,
    action_count: usize,
    noise: Real,
    nonlinearity: String,
    seed: u64,
    masks_true: StructuralMasks,
    compact: Vec<usize>,
    non_compact: Vec<usize>,
    minimal: Vec<usize>,
    minimal_degenerate: bool,
    identify: Option<IdentifySection>,
    prune: Option<PruneSection>,
}

pub fn run(cfg: &ResolvedCausal, out: &Path) -> Result<RunSummary> {
    fs::create_dir_all(out)?;
    let manifest = RunManifest::new("causal", cfg.seed, cfg)?;

    let nonlinearity = match cfg.nonlinearity.as_str() {
        "linear" => Nonlinearity::Linear,
        "tanh" => Nonlinearity::Tanh,
        other => {
            return Err(Error::Parameter(format!(
                "unknown nonlinearity {other:?} (linear, tanh)"
            )))
        }
    };
    let gen = LatentGenConfig {
        dims: cfg.d,
        density: cfg.density,
        noise: cfg.noise,
        action_count: cfg.actions,
        nonlinearity,
        ..LatentGenConfig::default()
    };
    let spec = make_latent_mdp(&gen, cfg.seed)?;
    let partition = compact_partition(&spec.masks)?;
    let minimal = minimal_sufficient_set(&spec.masks)?;
    let mut lines = vec![format!(
        "spec: d={}, actions={}, {} dynamics; minimal set {:?}, compact {:?}",
        cfg.d, cfg.actions, cfg.nonlinearity, minimal.dims, partition.compact
    )];

    let identify = if cfg.identify {
        let episodes = cfg.transitions.div_ceil(ROLLOUT_STEPS);
        let rollouts = (0..episodes)
            .map(|i| rollout_latent_random(&spec, ROLLOUT_STEPS, cfg.seed.wrapping_add(1 + i as u64)))
            .collect::<Result<Vec<_>>>()?;
        let est = identify_structure(&rollouts, cfg.actions, &IdentifyConfig::default())?;
        let f1 = mask_f1(&est.masks, &spec.masks)?;
        lines.push(format!(
            "identification: F1 {f1:.3} from {} transitions ({} tests, alpha' {:.2e})",
            est.transitions, est.tests, est.alpha_adjusted
        ));
        let relaxed = if cfg.lambda > 0.0 {
            let opts = RelaxedOptions { lambda: cfg.lambda, threshold: cfg.threshold };
            let masks = identify_relaxed(&rollouts, cfg.actions, &opts)?;
            let f1_rel = mask_f1(&masks, &spec.masks)?;
            lines.push(format!(
                "relaxed identification: F1 {f1_rel:.3} (lambda {}, threshold {})",
                cfg.lambda, cfg.threshold
            ));
            Some(RelaxedSection {
                lambda: cfg.lambda,
                threshold: cfg.threshold,
                f1: f1_rel,
                masks,
            })
        } else {
            None
        };
        Some(IdentifySection {
            transitions: est.transitions,
            tests: est.tests,
            alpha_adjusted: est.alpha_adjusted,
            f1,
            masks: est.masks,
            relaxed,
        })
    } else {
        None
    };

    let prune = if cfg.prune_check {
        let report = prune_invariance_check(&spec, None, cfg.horizon, cfg.samples, cfg.seed)?;
        lines.push(format!(
            "pruning {:?} changed the optimal action on {}/{} sampled states",
            report.pruned, report.disagreements, report.samples
        ));
        Some(PruneSection {
            pruned: report.pruned,
            horizon: report.horizon,
            samples: report.samples,
            disagreements: report.disagreements,
            fraction: report.fraction,
        })
    } else {
        None
    };

    let report = CausalReport {
        dims: cfg.d,
        action_count: cfg.actions,
        noise: cfg.noise,
        nonlinearity: cfg.nonlinearity.clone(),
        seed: cfg.seed,
        masks_true: spec.masks.clone(),
        compact: partition.compact,
        non_compact: partition.non_compact,
        minimal: minimal.dims,
        minimal_degenerate: minimal.degenerate,
        identify,
        prune,
    };
    fs::write(out.join(REPORT_FILE), super::to_json_pretty(&report)?)?;
    let mut manifest = manifest;
    manifest.stamp_artifact(out, REPORT_FILE)?;
    let manifest_path = manifest.write(out)?;
    lines.push(format!("wrote {REPORT_FILE}"));
    Ok(RunSummary { lines, manifest_path: Some(manifest_path) })
}
