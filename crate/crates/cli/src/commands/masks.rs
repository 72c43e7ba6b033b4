//! `masks`: run one trajectory window through a checkpoint and dump the gate
//! decisions, as raw JSON and as an SVG page with dropped patches darkened
//! over the frames and a keep/drop strip per temporal token.

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use adacred_core::dataset::{OfflineDataset, SequenceBatch};
use adacred_core::model::{load_checkpoint, AdaCredModel, KEEP_PREFIX};
use adacred_core::numerics::Tape;
use adacred_core::{Error, Real, Result};

use crate::config::{apply_file, parse_val, KvFile};
use crate::manifest::RunManifest;
use crate::opts::MasksFlags;
use crate::svg::{mask_page, MaskPageInput};
use crate::RunSummary;

pub const MASKS_JSON: &str = "masks.json";
pub const MASKS_SVG: &str = "masks.svg";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedMasks {
    pub ckpt: PathBuf,
    pub data: PathBuf,
    pub traj: usize,
    pub start: usize,
    pub gates: String,
}

impl Default for ResolvedMasks {
    fn default() -> Self {
        ResolvedMasks {
            ckpt: PathBuf::new(),
            data: PathBuf::new(),
            traj: 0,
            start: 0,
            gates: "eval".into(),
        }
    }
}

fn apply_kv(cfg: &mut ResolvedMasks, key: &str, value: &str) -> Result<()> {
    match key {
        "ckpt" => cfg.ckpt = value.into(),
        "data" => cfg.data = value.into(),
        "traj" => cfg.traj = parse_val(key, value)?,
        "start" => cfg.start = parse_val(key, value)?,
        "gates" => cfg.gates = value.into(),
        _ => return Err(Error::Parameter(format!("unknown masks key {key:?}"))),
    }
    Ok(())
}

pub fn resolve(flags: &MasksFlags, file: Option<&KvFile>) -> Result<ResolvedMasks> {
    let mut cfg = ResolvedMasks::default();
    apply_file(file, |k, v| apply_kv(&mut cfg, k, v))?;
    if let Some(x) = &flags.ckpt {
        cfg.ckpt = x.clone();
    }
    if let Some(x) = &flags.data {
        cfg.data = x.clone();
    }
    if let Some(x) = flags.traj {
        cfg.traj = x;
    }
    if let Some(x) = flags.start {
        cfg.start = x;
    }
    if let Some(x) = &flags.gates {
        cfg.gates = x.clone();
    }
    if cfg.ckpt.as_os_str().is_empty() || cfg.data.as_os_str().is_empty() {
        return Err(Error::Parameter("--ckpt and --data are required".into()));
    }
    Ok(cfg)
}

/// One layer's gate decisions, exactly binary.
#[derive(Debug, Serialize)]
struct LayerDump {
    layer: usize,
    rows: usize,
    row_width: usize,
    values: Vec<u8>,
}

#[derive(Debug, Serialize)]
struct MaskDump<'a> {
    traj: usize,
    start: usize,
    t_ctx: usize,
    patch: usize,
    patches: usize,
    token_prefix: usize,
    gates: &'a str,
    /// Rewards of the rendered steps, for reading the strips against events.
    rewards: Vec<Real>,
    spatial: Vec<LayerDump>,
    temporal: Vec<LayerDump>,
}

pub fn run(cfg: &ResolvedMasks, out: &Path) -> Result<RunSummary> {
    fs::create_dir_all(out)?;
    let mut manifest = RunManifest::new("masks", 0, cfg)?;
    let ckpt = load_checkpoint(&cfg.ckpt)?;
    manifest.stamp_input(&cfg.ckpt)?;
    let dataset = OfflineDataset::read(&cfg.data)?;
    manifest.stamp_input(&cfg.data)?;
    let model = AdaCredModel::from_parts(ckpt.config, ckpt.params)?;
    let mc = &model.config;

    if cfg.traj >= dataset.trajectories.len() {
        return Err(Error::Parameter(format!(
            "trajectory {} out of range ({} trajectories)",
            cfg.traj,
            dataset.trajectories.len()
        )));
    }
    let tr = &dataset.trajectories[cfg.traj];
    if (tr.frame_h, tr.frame_w) != (mc.frame_h, mc.frame_w) {
        return Err(Error::Contract(format!(
            "dataset frames {}x{} do not match model {}x{}",
            tr.frame_h, tr.frame_w, mc.frame_h, mc.frame_w
        )));
    }
    let end = cfg.start + mc.t_ctx;
    if end > tr.len() {
        return Err(Error::Parameter(format!(
            "window [{}, {end}) runs past the trajectory ({} steps)",
            cfg.start,
            tr.len()
        )));
    }

    // Rebuild the window exactly as a training batch would see it.
    let frames: Vec<Vec<Real>> = (0..end).map(|t| tr.frame(t).to_vec()).collect();
    let rtgs = &dataset.return_to_go(cfg.traj)[..end];
    let batch = SequenceBatch::from_history(
        &frames,
        &tr.actions[..end - 1],
        rtgs,
        mc.t_ctx,
        mc.frame_h,
        mc.frame_w,
        mc.obs_mean,
        mc.obs_std,
    )?;
    let policy = super::eval_cmd::gate_policy(&cfg.gates)?;
    let mut tape = Tape::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let out_fwd = model.forward(&mut tape, &batch, &policy, false, &mut rng)?;

    let dump = MaskDump {
        traj: cfg.traj,
        start: cfg.start,
        t_ctx: mc.t_ctx,
        patch: mc.patch,
        patches: mc.patches_per_frame(),
        token_prefix: KEEP_PREFIX,
        gates: &cfg.gates,
        rewards: tr.rewards[cfg.start..end].to_vec(),
        spatial: out_fwd
            .masks
            .spatial
            .iter()
            .enumerate()
            .map(|(layer, m)| LayerDump {
                layer,
                rows: m.rows,
                row_width: m.row_width,
                values: m.values.iter().map(|&v| v as u8).collect(),
            })
            .collect(),
        temporal: out_fwd
            .masks
            .temporal
            .iter()
            .enumerate()
            .map(|(layer, m)| LayerDump {
                layer,
                rows: m.rows,
                row_width: m.row_width,
                values: m.values.iter().map(|&v| v as u8).collect(),
            })
            .collect(),
    };
    fs::write(out.join(MASKS_JSON), super::to_json_pretty(&dump)?)?;

    // SVG wants the raw (unnormalized) frames of the rendered steps.
    let window_frames: Vec<Vec<Real>> =
        (cfg.start..end).map(|t| tr.frame(t).to_vec()).collect();
    let spatial: Vec<Vec<Real>> =
        out_fwd.masks.spatial.iter().map(|m| m.values.clone()).collect();
    let temporal: Vec<Vec<Real>> =
        out_fwd.masks.temporal.iter().map(|m| m.values.clone()).collect();
    let page = mask_page(&MaskPageInput {
        frames: &window_frames,
        frame_h: mc.frame_h,
        frame_w: mc.frame_w,
        patch: mc.patch,
        token_prefix: KEEP_PREFIX,
        spatial: &spatial,
        temporal: &temporal,
    })?;
    fs::write(out.join(MASKS_SVG), page)?;

    manifest.stamp_artifact(out, MASKS_JSON)?;
    manifest.stamp_artifact(out, MASKS_SVG)?;
    let manifest_path = manifest.write(out)?;

    let keep = |layers: &[adacred_core::model::LayerMasks]| -> Real {
        if layers.is_empty() {
            return 1.0;
        }
        layers.iter().map(|m| m.keep_ratio()).sum::<Real>() / layers.len() as Real
    };
    let lines = vec![
        format!(
            "rendered window [{}, {end}) of trajectory {} ({} layers)",
            cfg.start,
            cfg.traj,
            dump.spatial.len()
        ),
        format!(
            "keep ratios: spatial {:.3}, temporal {:.3} (gates {})",
            keep(&out_fwd.masks.spatial),
            keep(&out_fwd.masks.temporal),
            cfg.gates
        ),
        format!("wrote {MASKS_JSON} and {MASKS_SVG}"),
    ];
    Ok(RunSummary { lines, manifest_path: Some(manifest_path) })
}
