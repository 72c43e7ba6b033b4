//! `train`: one optimization stage over a stored dataset. Stage 1 trains the
//! dense backbone from scratch; stage 2 continues from a stage-1 checkpoint
//! with stochastic gates and the size penalty.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use adacred_core::dataset::OfflineDataset;
use adacred_core::model::{load_checkpoint, save_checkpoint, AdaCredModel, Checkpoint, ModelConfig};
use adacred_core::numerics::AdamConfig;
use adacred_core::training::{init_state, train_stage, Stage, TrainConfig};
use adacred_core::{Error, Real, Result};

use crate::config::{apply_file, parse_val, KvFile};
use crate::manifest::RunManifest;
use crate::opts::TrainFlags;
use crate::RunSummary;

pub const METRICS_FILE: &str = "metrics.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedTrain {
    pub data: PathBuf,
    pub stage: u8,
    pub init: Option<PathBuf>,
    pub preset: String,
    /// None at stage 2 means "inherit from the checkpoint".
    pub ctx: Option<usize>,
    /// Keep targets in percent.
    pub keep_spatial: u32,
    pub keep_temporal: u32,
    pub steps: usize,
    pub batch_size: usize,
    pub alpha: Real,
    pub lr: Real,
    pub warmup_tokens: u64,
    /// 0 sizes the cosine horizon to exactly this run.
    pub final_tokens: u64,
    /// None keeps the preset or checkpoint value.
    pub tau: Option<Real>,
    pub dropout: Option<Real>,
    pub seed: u64,
    pub ckpt_name: String,
}

impl Default for ResolvedTrain {
    fn default() -> Self {
        ResolvedTrain {
            data: PathBuf::new(),
            stage: 0,
            init: None,
            preset: "auto".into(),
            ctx: None,
            keep_spatial: 75,
            keep_temporal: 75,
            steps: 600,
            batch_size: 16,
            alpha: 10.0,
            lr: 6e-4,
            warmup_tokens: 10_240,
            final_tokens: 0,
            tau: None,
            dropout: None,
            seed: 0,
            ckpt_name: "checkpoint.adck".into(),
        }
    }
}

fn apply_kv(cfg: &mut ResolvedTrain, key: &str, value: &str) -> Result<()> {
    match key {
        "data" => cfg.data = value.into(),
        "stage" => cfg.stage = parse_val(key, value)?,
        "init" => cfg.init = Some(value.into()),
        "preset" => cfg.preset = value.into(),
        "ctx" => cfg.ctx = Some(parse_val(key, value)?),
        "keep-spatial" => cfg.keep_spatial = parse_val(key, value)?,
        "keep-temporal" => cfg.keep_temporal = parse_val(key, value)?,
        "steps" => cfg.steps = parse_val(key, value)?,
        "batch-size" => cfg.batch_size = parse_val(key, value)?,
        "alpha" => cfg.alpha = parse_val(key, value)?,
        "lr" => cfg.lr = parse_val(key, value)?,
        "warmup-tokens" => cfg.warmup_tokens = parse_val(key, value)?,
        "final-tokens" => cfg.final_tokens = parse_val(key, value)?,
        "tau" => cfg.tau = Some(parse_val(key, value)?),
        "dropout" => cfg.dropout = Some(parse_val(key, value)?),
        "seed" => cfg.seed = parse_val(key, value)?,
        "ckpt-name" => cfg.ckpt_name = value.into(),
        _ => return Err(Error::Parameter(format!("unknown train key {key:?}"))),
    }
    Ok(())
}

pub fn resolve(
    flags: &TrainFlags,
    file: Option<&KvFile>,
    env_seed: Option<u64>,
) -> Result<ResolvedTrain> {
    let mut cfg = ResolvedTrain::default();
    apply_file(file, |k, v| apply_kv(&mut cfg, k, v))?;
    if let Some(x) = &flags.data {
        cfg.data = x.clone();
    }
    if let Some(x) = flags.stage {
        cfg.stage = x;
    }
    if let Some(x) = &flags.init {
        cfg.init = Some(x.clone());
    }
    if let Some(x) = &flags.preset {
        cfg.preset = x.clone();
    }
    if let Some(x) = flags.ctx {
        cfg.ctx = Some(x);
    }
    if let Some(x) = flags.keep_spatial {
        cfg.keep_spatial = x;
    }
    if let Some(x) = flags.keep_temporal {
        cfg.keep_temporal = x;
    }
    if let Some(x) = flags.steps {
        cfg.steps = x;
    }
    if let Some(x) = flags.batch_size {
        cfg.batch_size = x;
    }
    if let Some(x) = flags.alpha {
        cfg.alpha = x;
    }
    if let Some(x) = flags.lr {
        cfg.lr = x;
    }
    if let Some(x) = flags.warmup_tokens {
        cfg.warmup_tokens = x;
    }
    if let Some(x) = flags.final_tokens {
        cfg.final_tokens = x;
    }
    if let Some(x) = flags.tau {
        cfg.tau = Some(x);
    }
    if let Some(x) = flags.dropout {
        cfg.dropout = Some(x);
    }
    if let Some(x) = flags.seed {
        cfg.seed = x;
    }
    if let Some(x) = &flags.ckpt_name {
        cfg.ckpt_name = x.clone();
    }
    if let Some(s) = env_seed {
        cfg.seed = s;
    }

    if cfg.data.as_os_str().is_empty() {
        return Err(Error::Parameter("--data is required".into()));
    }
    if !(1..=2).contains(&cfg.stage) {
        return Err(Error::Parameter(format!("stage {} is not 1 or 2", cfg.stage)));
    }
    if cfg.stage == 1 && cfg.ctx.is_none() {
        cfg.ctx = Some(10);
    }
    for (name, pct) in [("keep-spatial", cfg.keep_spatial), ("keep-temporal", cfg.keep_temporal)] {
        if !(1..=100).contains(&pct) {
            return Err(Error::Parameter(format!("{name} {pct} outside 1..=100 percent")));
        }
    }
    if cfg.steps == 0 {
        return Err(Error::Parameter("steps must be positive".into()));
    }
    Ok(cfg)
}

/// Model geometry for a dataset, by preset name.
fn preset_config(preset: &str, ds: &OfflineDataset) -> Result<ModelConfig> {
    let (h, w) = (ds.frame_h(), ds.frame_w());
    let data_actions = ds
        .trajectories
        .iter()
        .flat_map(|t| t.actions.iter())
        .copied()
        .max()
        .map_or(2, |m| (m as usize + 1).max(2));
    match preset {
        "keydoor" => Ok(ModelConfig::keydoor_desk()),
        "paper" => Ok(ModelConfig::paper()),
        "latent" => {
            if h != w {
                return Err(Error::Parameter(format!(
                    "the latent preset needs square frames, dataset has {h}x{w}"
                )));
            }
            Ok(ModelConfig::latent_desk(h, data_actions))
        }
        "auto" => match (h, w) {
            (24, 32) => Ok(ModelConfig::keydoor_desk()),
            (84, 84) => Ok(ModelConfig::paper()),
            (a, b) if a == b => Ok(ModelConfig::latent_desk(a, data_actions)),
            _ => Err(Error::Parameter(format!(
                "no preset matches {h}x{w} frames; pass --preset explicitly"
            ))),
        },
        other => {
            Err(Error::Parameter(format!("unknown preset {other:?} (auto, keydoor, paper, latent)")))
        }
    }
}

fn apply_model_overrides(mc: &mut ModelConfig, cfg: &ResolvedTrain) {
    mc.keep_spatial = cfg.keep_spatial as Real / 100.0;
    mc.keep_temporal = cfg.keep_temporal as Real / 100.0;
    if let Some(t) = cfg.tau {
        mc.tau = t;
    }
    if let Some(d) = cfg.dropout {
        mc.dropout = d;
    }
}

pub fn run(cfg: &ResolvedTrain, out: &Path) -> Result<RunSummary> {
    fs::create_dir_all(out)?;
    let dataset = OfflineDataset::read(&cfg.data)?;
    let mut manifest = RunManifest::new("train", cfg.seed, cfg)?;
    manifest.stamp_input(&cfg.data)?;

    let (mut model, stage) = match cfg.stage {
        1 => {
            let mut mc = preset_config(&cfg.preset, &dataset)?;
            if let Some(c) = cfg.ctx {
                mc.t_ctx = c;
            }
            apply_model_overrides(&mut mc, cfg);
            // Normalization travels with the checkpoint so evaluation does
            // not need the dataset.
            mc.obs_mean = dataset.obs_mean;
            mc.obs_std = dataset.obs_std;
            (AdaCredModel::init(mc, cfg.seed)?, Stage::Dense)
        }
        2 => {
            let init = cfg.init.as_ref().ok_or_else(|| {
                Error::Contract("stage 2 continues from a stage-1 checkpoint; pass --init".into())
            })?;
            let ckpt = load_checkpoint(init)?;
            manifest.stamp_input(init)?;
            let mut mc = ckpt.config;
            if let Some(c) = cfg.ctx {
                if c != mc.t_ctx {
                    return Err(Error::Contract(format!(
                        "checkpoint context is {}, stage 2 cannot change it to {c}",
                        mc.t_ctx
                    )));
                }
            }
            apply_model_overrides(&mut mc, cfg);
            (AdaCredModel::from_parts(mc, ckpt.params)?, Stage::Gated)
        }
        other => return Err(Error::Parameter(format!("stage {other} is not 1 or 2"))),
    };

    let total_tokens = (cfg.steps * cfg.batch_size * model.config.t_ctx) as u64;
    let adam = AdamConfig {
        lr_peak: cfg.lr,
        warmup_tokens: cfg.warmup_tokens,
        final_tokens: if cfg.final_tokens == 0 { total_tokens.max(1) } else { cfg.final_tokens },
        ..AdamConfig::default()
    };
    let tcfg = TrainConfig {
        batch_size: cfg.batch_size,
        steps: cfg.steps,
        alpha: cfg.alpha,
        adam,
        seed: cfg.seed,
    };
    let state = init_state(&model, stage, cfg.seed)?;
    let report = train_stage(&mut model, &dataset, &tcfg, stage, state)?;

    adacred_core::training::write_metrics_csv(&out.join(METRICS_FILE), &report.records)?;
    let AdaCredModel { config, params } = model;
    let ckpt = Checkpoint { config, params, aux: Some(report.final_state.to_aux()) };
    save_checkpoint(&ckpt, &out.join(&cfg.ckpt_name))?;
    manifest.stamp_artifact(out, METRICS_FILE)?;
    manifest.stamp_artifact(out, &cfg.ckpt_name)?;
    let manifest_path = manifest.write(out)?;

    let last = report.records.last().expect("steps >= 1 yields at least one record");
    let lines = vec![
        format!(
            "stage {}: {} steps, batch {}, ctx {}",
            cfg.stage, cfg.steps, cfg.batch_size, ckpt.config.t_ctx
        ),
        format!(
            "final loss {:.4} (action {:.4}, efficiency {:.4})",
            last.loss_total, last.loss_action, last.loss_eff
        ),
        format!("final keep: spatial {:.3}, temporal {:.3}", last.keep_spatial, last.keep_temporal),
        format!("wrote {} and {}", cfg.ckpt_name, METRICS_FILE),
    ];
    Ok(RunSummary { lines, manifest_path: Some(manifest_path) })
}
