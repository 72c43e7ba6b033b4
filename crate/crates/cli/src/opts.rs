//! Flag definitions. Most flags are optional at the parser level so the
//! precedence chain (defaults, config file, flags, seed env var) can be
//! applied in one place; required-ness is enforced during resolution.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "adacred", version, about = "Token-crediting sequence model toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate an offline trajectory dataset.
    GenData(GenDataFlags),
    /// Train one stage (1 dense, 2 gated) on a dataset.
    Train(TrainFlags),
    /// Evaluate a checkpoint in its environment.
    Eval(EvalFlags),
    /// Evaluate every cell of the keep-ratio grid and plot the results.
    Sweep(SweepFlags),
    /// Render the masks a checkpoint assigns to one trajectory window.
    Masks(MasksFlags),
    /// Structure identification and pruning-invariance checks.
    Causal(CausalFlags),
    /// Re-execute a manifest and verify the outputs byte for byte.
    Rerun(RerunFlags),
}

/// Flags shared by every artifact-producing command.
#[derive(Debug, Args)]
pub struct CommonFlags {
    /// Output directory; the manifest lands at its root.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Optional `key = value` config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenDataFlags {
    /// Environment: keydoor, keydoor-paper, or latent.
    #[arg(long)]
    pub env: Option<String>,
    #[arg(long)]
    pub episodes: Option<usize>,
    /// Behavior policy: random, scripted, or mixed.
    #[arg(long)]
    pub policy: Option<String>,
    /// Per-step exploration probability of the mixed policy.
    #[arg(long)]
    pub explore: Option<f64>,
    /// Return-to-go discount.
    #[arg(long)]
    pub gamma: Option<f32>,
    /// Zero all rewards in the stored dataset.
    #[arg(long)]
    pub imitation: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Dataset file name inside the output directory.
    #[arg(long)]
    pub file: Option<String>,
    #[arg(long)]
    pub latent_dims: Option<usize>,
    #[arg(long)]
    pub latent_actions: Option<usize>,
    #[arg(long)]
    pub latent_noise: Option<f32>,
    #[arg(long)]
    pub latent_horizon: Option<usize>,
    #[command(flatten)]
    pub common: CommonFlags,
}

#[derive(Debug, Args)]
pub struct TrainFlags {
    /// Dataset file written by gen-data.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// 1 trains the dense backbone, 2 the gated model.
    #[arg(long)]
    pub stage: Option<u8>,
    /// Stage-1 checkpoint to continue from (required for stage 2).
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Model preset: auto, keydoor, paper, or latent.
    #[arg(long)]
    pub preset: Option<String>,
    /// Context length in steps; stage 2 inherits the checkpoint's value.
    #[arg(long)]
    pub ctx: Option<usize>,
    /// Spatial keep target in percent.
    #[arg(long)]
    pub keep_spatial: Option<u32>,
    /// Temporal keep target in percent.
    #[arg(long)]
    pub keep_temporal: Option<u32>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Efficiency-loss weight (stage 2).
    #[arg(long)]
    pub alpha: Option<f32>,
    /// Peak learning rate.
    #[arg(long)]
    pub lr: Option<f32>,
    #[arg(long)]
    pub warmup_tokens: Option<u64>,
    /// Cosine horizon in tokens; 0 spans exactly this run.
    #[arg(long)]
    pub final_tokens: Option<u64>,
    /// Gumbel-sigmoid temperature.
    #[arg(long)]
    pub tau: Option<f32>,
    #[arg(long)]
    pub dropout: Option<f32>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Checkpoint file name inside the output directory.
    #[arg(long)]
    pub ckpt_name: Option<String>,
    #[command(flatten)]
    pub common: CommonFlags,
}

#[derive(Debug, Args)]
pub struct EvalFlags {
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    /// Environment: keydoor, keydoor-paper, or latent (needs --env-spec).
    #[arg(long)]
    pub env: Option<String>,
    /// Latent MDP spec JSON written by gen-data.
    #[arg(long)]
    pub env_spec: Option<PathBuf>,
    /// Episodes per seed.
    #[arg(long)]
    pub episodes: Option<usize>,
    /// Number of evaluation seeds.
    #[arg(long)]
    pub seeds: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Gate policy: eval (thresholded), on (all ones), off (no gate ops).
    #[arg(long)]
    pub gates: Option<String>,
    /// Initial return-to-go conditioning.
    #[arg(long)]
    pub target_return: Option<f32>,
    /// Hold the return token at zero.
    #[arg(long)]
    pub imitation: bool,
    #[command(flatten)]
    pub common: CommonFlags,
}

#[derive(Debug, Args)]
pub struct SweepFlags {
    /// Directory holding per-cell checkpoints named cell_s{S}_t{T}.adck.
    #[arg(long)]
    pub ckpt_dir: Option<PathBuf>,
    #[arg(long)]
    pub env: Option<String>,
    #[arg(long)]
    pub env_spec: Option<PathBuf>,
    #[arg(long)]
    pub episodes: Option<usize>,
    #[arg(long)]
    pub seeds: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub target_return: Option<f32>,
    #[arg(long)]
    pub imitation: bool,
    #[command(flatten)]
    pub common: CommonFlags,
}

#[derive(Debug, Args)]
pub struct MasksFlags {
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    /// Dataset providing the trajectory window.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Trajectory index.
    #[arg(long)]
    pub traj: Option<usize>,
    /// First step of the rendered window.
    #[arg(long)]
    pub start: Option<usize>,
    /// Gate policy: eval or on.
    #[arg(long)]
    pub gates: Option<String>,
    #[command(flatten)]
    pub common: CommonFlags,
}

#[derive(Debug, Args)]
pub struct CausalFlags {
    /// Run partial-correlation structure identification.
    #[arg(long)]
    pub identify: bool,
    /// Run the exact pruning-invariance check.
    #[arg(long)]
    pub prune_check: bool,
    /// Latent dimensions of the generated spec.
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub actions: Option<usize>,
    /// Transition noise of the generated spec.
    #[arg(long)]
    pub noise: Option<f32>,
    /// Edge density of the generated spec.
    #[arg(long)]
    pub density: Option<f64>,
    /// Dynamics nonlinearity: linear or tanh.
    #[arg(long)]
    pub nonlinearity: Option<String>,
    /// Total transitions to sample for identification.
    #[arg(long)]
    pub transitions: Option<usize>,
    /// Planning horizon of the pruning check.
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Initial states sampled by the pruning check.
    #[arg(long)]
    pub samples: Option<usize>,
    /// l1 weight; positive values add a relaxed lasso identification.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Coefficient threshold of the relaxed identification.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub common: CommonFlags,
}

#[derive(Debug, Args)]
pub struct RerunFlags {
    /// Manifest to re-execute.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory of the reproduction (default: rerun/ next to the
    /// manifest).
    #[arg(long)]
    pub out: Option<PathBuf>,
}
