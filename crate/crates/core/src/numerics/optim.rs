//! Adam with decoupled weight decay, global-norm gradient clipping, and a
//! token-based learning-rate schedule (linear warmup, cosine decay to a floor).

use serde::{Deserialize, Serialize};

use super::Real;
use crate::{Error, Result};

/// Optimizer hyperparameters. Defaults follow the training recipe: peak lr
/// 6e-4, betas (0.9, 0.95), decoupled decay 0.1, clip 1.0, warmup over
/// 512 x 20 tokens, cosine decay to 10% of peak.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr_peak: Real,
    pub beta1: Real,
    pub beta2: Real,
    pub eps: Real,
    pub weight_decay: Real,
    pub clip_norm: Real,
    pub warmup_tokens: u64,
    pub final_tokens: u64,
    pub lr_floor_frac: Real,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr_peak: 6e-4,
            beta1: 0.9,
            beta2: 0.95,
            eps: 1e-8,
            weight_decay: 0.1,
            clip_norm: 1.0,
            warmup_tokens: 512 * 20,
            final_tokens: 1_000_000,
            lr_floor_frac: 0.1,
        }
    }
}

/// First/second moment buffers plus step and token counters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<Vec<Real>>,
    pub v: Vec<Vec<Real>>,
    pub step: u64,
    pub tokens: u64,
}

impl AdamState {
    pub fn new(sizes: &[usize]) -> Self {
        AdamState {
            m: sizes.iter().map(|&s| vec![0.0; s]).collect(),
            v: sizes.iter().map(|&s| vec![0.0; s]).collect(),
            step: 0,
            tokens: 0,
        }
    }
}

/// Mutable view of one parameter tensor plus its decay eligibility.
pub struct ParamRef<'a> {
    pub data: &'a mut [Real],
    pub decay: bool,
}

/// Diagnostics returned by a successful step.
#[derive(Debug, Clone, Copy)]
pub struct StepStats {
    pub lr: Real,
    pub grad_norm: Real,
    pub clipped: bool,
}

/// Learning rate at a given processed-token count: linear warmup to the peak,
/// then cosine decay to `lr_floor_frac * peak` at `final_tokens`, constant
/// at the floor beyond.
pub fn lr_at(cfg: &AdamConfig, tokens: u64) -> Real {
    let floor = cfg.lr_peak * cfg.lr_floor_frac;
    if cfg.warmup_tokens > 0 && tokens < cfg.warmup_tokens {
        return cfg.lr_peak * tokens as Real / cfg.warmup_tokens as Real;
    }
    if cfg.final_tokens <= cfg.warmup_tokens {
        return floor;
    }
    let progress = (tokens - cfg.warmup_tokens) as Real
        / (cfg.final_tokens - cfg.warmup_tokens) as Real;
    let progress = progress.min(1.0);
    floor + (cfg.lr_peak - floor) * 0.5 * (1.0 + (std::f64::consts::PI as Real * progress).cos())
}

/// One Adam step over a parameter group. Order of effects: validate gradients
/// (a NaN/Inf refuses the step without touching any state), clip by global
/// norm, advance token/step counters, schedule the lr, update moments with
/// bias correction, and apply decoupled weight decay.
pub fn adam_step(
    cfg: &AdamConfig,
    state: &mut AdamState,
    params: &mut [ParamRef<'_>],
    grads: &[Vec<Real>],
    batch_tokens: u64,
) -> Result<StepStats> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::dim(
            "adam_step",
            format!("{} params, {} grads, {} moment buffers", params.len(), grads.len(), state.m.len()),
        ));
    }
    let mut sq_norm = 0.0;
    for (pi, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.data.len() != g.len() {
            return Err(Error::dim(
                "adam_step",
                format!("param {pi}: {} values vs {} gradient entries", p.data.len(), g.len()),
            ));
        }
        for (j, v) in g.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::Numerical(format!(
                    "gradient for param {pi} holds non-finite value {v} at index {j}; step refused"
                )));
            }
            sq_norm += v * v;
        }
    }
    let grad_norm = sq_norm.sqrt();
    let clipped = grad_norm > cfg.clip_norm;
    let scale = if clipped { cfg.clip_norm / grad_norm } else { 1.0 };

    state.tokens += batch_tokens;
    state.step += 1;
    let lr = lr_at(cfg, state.tokens);
    let bc1 = 1.0 - cfg.beta1.powi(state.step as i32);
    let bc2 = 1.0 - cfg.beta2.powi(state.step as i32);

    for (pi, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let (m, v) = (&mut state.m[pi], &mut state.v[pi]);
        for j in 0..g.len() {
            let gj = g[j] * scale;
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * gj;
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * gj * gj;
            let mhat = m[j] / bc1;
            let vhat = v[j] / bc2;
            let decay = if p.decay { cfg.weight_decay * p.data[j] } else { 0.0 };
            p.data[j] -= lr * (mhat / (vhat.sqrt() + cfg.eps) + decay);
        }
    }
    Ok(StepStats { lr, grad_norm, clipped })
}
