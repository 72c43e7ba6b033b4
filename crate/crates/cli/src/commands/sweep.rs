//! `sweep`: evaluate every cell of the keep-ratio grid from per-cell
//! checkpoints and plot the results. Cells without a checkpoint are marked
//! absent and the run continues; the (100, 100) reference cell is always
//! listed and is evaluated with gates forced open.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use adacred_core::model::{load_checkpoint, AdaCredModel, MaskPolicy};
use adacred_core::{Error, Real, Result};

use crate::config::{apply_file, parse_bool, parse_val, KvFile};
use crate::manifest::RunManifest;
use crate::opts::SweepFlags;
use crate::svg::{bar_chart, Bar};
use crate::RunSummary;

use super::eval_cmd::{build_env, eval_seeds, AggregateEval};

pub const SWEEP_CSV: &str = "sweep.csv";
pub const SWEEP_JSON: &str = "sweep.json";
pub const SWEEP_SVG: &str = "sweep.svg";
pub const SWEEP_HEADER: &str =
    "keep_spatial,keep_temporal,present,episodes,mean_return,std_return";

/// Keep-ratio grid in percent, baseline cell last.
pub const SWEEP_GRID: [(u32, u32); 5] = [(50, 50), (50, 100), (40, 80), (100, 50), (100, 100)];

pub fn cell_file(keep_spatial: u32, keep_temporal: u32) -> String {
    format!("cell_s{keep_spatial}_t{keep_temporal}.adck")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedSweep {
    pub ckpt_dir: std::path::PathBuf,
    pub env: String,
    pub env_spec: Option<std::path::PathBuf>,
    pub episodes: usize,
    pub seeds: usize,
    pub seed: u64,
    pub target_return: Real,
    pub imitation: bool,
}

impl Default for ResolvedSweep {
    fn default() -> Self {
        ResolvedSweep {
            ckpt_dir: std::path::PathBuf::new(),
            env: "keydoor".into(),
            env_spec: None,
            episodes: 10,
            seeds: 10,
            seed: 0,
            target_return: 1.0,
            imitation: false,
        }
    }
}

fn apply_kv(cfg: &mut ResolvedSweep, key: &str, value: &str) -> Result<()> {
    match key {
        "ckpt-dir" => cfg.ckpt_dir = value.into(),
        "env" => cfg.env = value.into(),
        "env-spec" => cfg.env_spec = Some(value.into()),
        "episodes" => cfg.episodes = parse_val(key, value)?,
        "seeds" => cfg.seeds = parse_val(key, value)?,
        "seed" => cfg.seed = parse_val(key, value)?,
        "target-return" => cfg.target_return = parse_val(key, value)?,
        "imitation" => cfg.imitation = parse_bool(key, value)?,
        _ => return Err(Error::Parameter(format!("unknown sweep key {key:?}"))),
    }
    Ok(())
}

pub fn resolve(
    flags: &SweepFlags,
    file: Option<&KvFile>,
    env_seed: Option<u64>,
) -> Result<ResolvedSweep> {
    let mut cfg = ResolvedSweep::default();
    apply_file(file, |k, v| apply_kv(&mut cfg, k, v))?;
    if let Some(x) = &flags.ckpt_dir {
        cfg.ckpt_dir = x.clone();
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
    if let Some(x) = flags.target_return {
        cfg.target_return = x;
    }
    if flags.imitation {
        cfg.imitation = true;
    }
    if let Some(s) = env_seed {
        cfg.seed = s;
    }

    if cfg.ckpt_dir.as_os_str().is_empty() {
        return Err(Error::Parameter("--ckpt-dir is required".into()));
    }
    if cfg.episodes == 0 || cfg.seeds == 0 {
        return Err(Error::Parameter("episodes and seeds must be positive".into()));
    }
    Ok(cfg)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellResult {
    pub keep_spatial: u32,
    pub keep_temporal: u32,
    pub file: String,
    pub present: bool,
    pub result: Option<AggregateEval>,
}

pub fn run(cfg: &ResolvedSweep, out: &Path) -> Result<RunSummary> {
    fs::create_dir_all(out)?;
    let mut manifest = RunManifest::new("sweep", cfg.seed, cfg)?;
    let mut env = build_env(&cfg.env, cfg.env_spec.as_deref(), &mut manifest)?;

    let mut cells = Vec::with_capacity(SWEEP_GRID.len());
    let mut lines = Vec::new();
    for (s, t) in SWEEP_GRID {
        let file = cell_file(s, t);
        let path = cfg.ckpt_dir.join(&file);
        if !path.is_file() {
            lines.push(format!("({s},{t}): absent ({file} not found)"));
            cells.push(CellResult {
                keep_spatial: s,
                keep_temporal: t,
                file,
                present: false,
                result: None,
            });
            continue;
        }
        let ckpt = load_checkpoint(&path)?;
        manifest.stamp_input(&path)?;
        let model = AdaCredModel::from_parts(ckpt.config, ckpt.params)?;
        // The reference cell is the ungated baseline by definition.
        let policy =
            if (s, t) == (100, 100) { MaskPolicy::ForceOn } else { MaskPolicy::Eval };
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
        lines.push(format!("({s},{t}): mean return {:.3} +- {:.3}", agg.mean, agg.std));
        cells.push(CellResult {
            keep_spatial: s,
            keep_temporal: t,
            file,
            present: true,
            result: Some(agg),
        });
    }

    let mut csv = String::from(SWEEP_HEADER);
    csv.push('\n');
    for c in &cells {
        match &c.result {
            Some(a) => {
                let _ = writeln!(
                    csv,
                    "{},{},1,{},{:.6},{:.6}",
                    c.keep_spatial, c.keep_temporal, a.episodes, a.mean, a.std
                );
            }
            None => {
                let _ = writeln!(csv, "{},{},0,0,,", c.keep_spatial, c.keep_temporal);
            }
        }
    }
    fs::write(out.join(SWEEP_CSV), csv)?;
    fs::write(out.join(SWEEP_JSON), super::to_json_pretty(&cells)?)?;

    let bars: Vec<Bar> = cells
        .iter()
        .map(|c| Bar {
            label: format!("({},{})", c.keep_spatial, c.keep_temporal),
            mean: c.result.as_ref().map(|a| a.mean as f64),
            std: c.result.as_ref().map_or(0.0, |a| a.std as f64),
        })
        .collect();
    fs::write(
        out.join(SWEEP_SVG),
        bar_chart("mean return by keep-ratio cell (spatial, temporal) %", "return", &bars),
    )?;

    manifest.stamp_artifact(out, SWEEP_CSV)?;
    manifest.stamp_artifact(out, SWEEP_JSON)?;
    manifest.stamp_artifact(out, SWEEP_SVG)?;
    let manifest_path = manifest.write(out)?;
    Ok(RunSummary { lines, manifest_path: Some(manifest_path) })
}
