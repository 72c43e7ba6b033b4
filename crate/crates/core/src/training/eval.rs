//! Greedy autoregressive evaluation inside an environment.
//!
//! Each step rebuilds the context window from the episode history exactly as
//! training windows are built (left padding, same normalization), reads the
//! logits of the newest slot, and takes the argmax action. The return token
//! is decremented by observed rewards so it stays a return-to-go.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::SequenceBatch;
use crate::envs::Environment;
use crate::model::{AdaCredModel, MaskPolicy};
use crate::numerics::{Real, Tape};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub episodes: usize,
    /// Initial return-to-go conditioning.
    pub target_return: Real,
    /// Hold the return token at zero (models trained on reward-free data).
    pub imitation: bool,
    /// Episode i resets the environment with `seed + i`.
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub returns: Vec<Real>,
    pub mean: Real,
    /// Sample standard deviation (n - 1); zero for a single episode.
    pub std: Real,
    /// Mean keep ratios across all forward passes of the evaluation.
    pub mean_keep_spatial: Real,
    pub mean_keep_temporal: Real,
}

/// First index of the largest value; ties resolve to the lowest index.
pub fn argmax(xs: &[Real]) -> usize {
    let mut best = 0;
    for (i, v) in xs.iter().enumerate().skip(1) {
        if *v > xs[best] {
            best = i;
        }
    }
    best
}

pub fn evaluate(
    model: &AdaCredModel,
    env: &mut dyn Environment,
    policy: &MaskPolicy,
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    let mc = &model.config;
    if env.frame_h() != mc.frame_h || env.frame_w() != mc.frame_w {
        return Err(Error::Contract(format!(
            "environment frames {}x{} do not match model {}x{}",
            env.frame_h(),
            env.frame_w(),
            mc.frame_h,
            mc.frame_w
        )));
    }
    if env.action_count() as usize != mc.action_count {
        return Err(Error::Contract(format!(
            "environment has {} actions, model {}",
            env.action_count(),
            mc.action_count
        )));
    }
    if cfg.episodes == 0 {
        return Err(Error::Parameter("episodes must be positive".into()));
    }

    // Deterministic policies never draw from this; it satisfies the forward
    // signature and keeps stochastic policies reproducible.
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5151_1515_AAAA_3333);
    let mut returns = Vec::with_capacity(cfg.episodes);
    let mut keep_s_acc = 0.0;
    let mut keep_t_acc = 0.0;
    let mut forwards = 0usize;

    for ep in 0..cfg.episodes {
        let mut frames = vec![env.reset(cfg.seed + ep as u64)];
        let mut actions: Vec<u16> = Vec::new();
        let mut rtgs = vec![if cfg.imitation { 0.0 } else { cfg.target_return }];
        let mut total = 0.0;

        for _ in 0..env.horizon() {
            let batch = SequenceBatch::from_history(
                &frames,
                &actions,
                &rtgs,
                mc.t_ctx,
                mc.frame_h,
                mc.frame_w,
                mc.obs_mean,
                mc.obs_std,
            )?;
            let mut tape = Tape::new();
            let out = model.forward(&mut tape, &batch, policy, false, &mut rng)?;
            let row = mc.t_ctx - 1;
            let logits = &tape.data(out.logits)[row * mc.action_count..(row + 1) * mc.action_count];
            let action = argmax(logits) as u16;
            keep_s_acc += mean_keep(&out.masks.spatial);
            keep_t_acc += mean_keep(&out.masks.temporal);
            forwards += 1;

            let (obs, reward) = env.step(action)?;
            total += reward;
            frames.push(obs);
            actions.push(action);
            let next = if cfg.imitation { 0.0 } else { rtgs.last().unwrap() - reward };
            rtgs.push(next);
        }
        returns.push(total);
    }

    let n = returns.len() as Real;
    let mean = returns.iter().sum::<Real>() / n;
    let std = if returns.len() > 1 {
        (returns.iter().map(|r| (r - mean) * (r - mean)).sum::<Real>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(EvalReport {
        returns,
        mean,
        std,
        mean_keep_spatial: keep_s_acc / forwards as Real,
        mean_keep_temporal: keep_t_acc / forwards as Real,
    })
}

fn mean_keep(layers: &[crate::model::LayerMasks]) -> Real {
    if layers.is_empty() {
        return 1.0;
    }
    layers.iter().map(|m| m.keep_ratio()).sum::<Real>() / layers.len() as Real
}
