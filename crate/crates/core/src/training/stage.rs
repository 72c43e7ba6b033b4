//! Two-stage optimization loop.
//!
//! The dense stage trains the backbone with gates forced open and the credit
//! heads completely outside the optimizer (weight decay would otherwise move
//! them even with zero gradient). The gated stage re-enters with a fresh
//! optimizer over every parameter and adds the size penalty.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::OfflineDataset;
use crate::model::{decays, AdaCredModel, MaskPolicy, TrainAux};
use crate::numerics::{adam_step, AdamConfig, AdamState, ParamRef, Real, Tape};
use crate::{Error, Result};

use super::losses::{action_loss, efficiency_loss, total_loss};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    /// Gates forced open, credit heads frozen.
    Dense,
    /// Stochastic gates, all parameters, size penalty active.
    Gated,
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub steps: usize,
    /// Weight of the size penalty (gated stage only).
    pub alpha: Real,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 16,
            steps: 1000,
            alpha: 1.0,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

/// One logged optimizer step.
#[derive(Debug, Clone)]
pub struct TrainRecord {
    pub step: u64,
    pub loss_action: Real,
    pub loss_eff: Real,
    pub loss_total: Real,
    /// Mean keep ratio across spatial / temporal layers for this batch.
    pub keep_spatial: Real,
    pub keep_temporal: Real,
    /// Per-layer keep ratios behind the two means, in layer order.
    pub keep_spatial_layers: Vec<Real>,
    pub keep_temporal_layers: Vec<Real>,
    pub lr: Real,
    pub grad_norm: Real,
}

/// Optimizer state plus the sampling/gating random stream; everything needed
/// to continue a run bit-exactly.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub opt_names: Vec<String>,
    pub adam: AdamState,
    pub rng: ChaCha8Rng,
}

impl TrainState {
    /// Checkpoint payload for this state.
    pub fn to_aux(&self) -> TrainAux {
        TrainAux {
            opt_names: self.opt_names.clone(),
            adam: self.adam.clone(),
            rng_seed: self.rng.get_seed(),
            rng_word_pos: self.rng.get_word_pos(),
        }
    }
}

#[derive(Debug)]
pub struct StageReport {
    pub records: Vec<TrainRecord>,
    pub final_state: TrainState,
}

/// Parameters the optimizer touches, in store order. The dense stage skips
/// the credit heads entirely.
pub fn optimized_names(model: &AdaCredModel, stage: Stage) -> Vec<String> {
    model
        .params
        .iter()
        .filter(|(n, _)| stage == Stage::Gated || !n.contains(".credit."))
        .map(|(n, _)| n.to_string())
        .collect()
}

/// Fresh optimizer state for a stage.
pub fn init_state(model: &AdaCredModel, stage: Stage, seed: u64) -> Result<TrainState> {
    let opt_names = optimized_names(model, stage);
    let mut sizes = Vec::with_capacity(opt_names.len());
    for n in &opt_names {
        sizes.push(model.params.get(n)?.data.len());
    }
    Ok(TrainState {
        opt_names,
        adam: AdamState::new(&sizes),
        rng: ChaCha8Rng::seed_from_u64(seed),
    })
}

/// Rebuild a state from checkpoint aux data, validating it against the model.
pub fn resume_state(model: &AdaCredModel, aux: &TrainAux) -> Result<TrainState> {
    if aux.adam.m.len() != aux.opt_names.len() {
        return Err(Error::Contract(format!(
            "optimizer state covers {} tensors, {} names listed",
            aux.adam.m.len(),
            aux.opt_names.len()
        )));
    }
    for (name, m) in aux.opt_names.iter().zip(&aux.adam.m) {
        let t = model.params.get(name).map_err(|_| {
            Error::Contract(format!("optimizer state references unknown parameter {name:?}"))
        })?;
        if t.data.len() != m.len() {
            return Err(Error::Contract(format!(
                "optimizer state for {name:?} holds {} values, parameter has {}",
                m.len(),
                t.data.len()
            )));
        }
    }
    let mut rng = ChaCha8Rng::from_seed(aux.rng_seed);
    rng.set_word_pos(aux.rng_word_pos);
    Ok(TrainState { opt_names: aux.opt_names.clone(), adam: aux.adam.clone(), rng })
}

/// Run `cfg.steps` optimizer steps of one stage. On a non-finite loss or
/// gradient the step is refused and an error returned; the model still holds
/// the last good parameters and can be checkpointed by the caller.
pub fn train_stage(
    model: &mut AdaCredModel,
    data: &OfflineDataset,
    cfg: &TrainConfig,
    stage: Stage,
    mut state: TrainState,
) -> Result<StageReport> {
    if data.frame_h() != model.config.frame_h || data.frame_w() != model.config.frame_w {
        return Err(Error::Contract(format!(
            "dataset frames {}x{} do not match model {}x{}",
            data.frame_h(),
            data.frame_w(),
            model.config.frame_h,
            model.config.frame_w
        )));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Parameter("batch_size must be positive".into()));
    }

    // The optimized subset must be a store-order subsequence so gradient
    // collection and ParamRef construction stay aligned.
    let store_names: Vec<String> = model.params.iter().map(|(n, _)| n.to_string()).collect();
    let mut opt_idx = Vec::with_capacity(state.opt_names.len());
    let mut cursor = 0usize;
    for name in &state.opt_names {
        let found = store_names[cursor..].iter().position(|n| n == name).ok_or_else(|| {
            Error::Contract(format!("optimizer names are not in parameter-store order ({name:?})"))
        })?;
        cursor += found;
        opt_idx.push(cursor);
        cursor += 1;
    }
    let mut decay_flags = Vec::with_capacity(state.opt_names.len());
    for name in &state.opt_names {
        decay_flags.push(decays(name, model.params.get(name)?));
    }

    let policy = match stage {
        Stage::Dense => MaskPolicy::ForceOn,
        Stage::Gated => MaskPolicy::Train,
    };
    let t_ctx = model.config.t_ctx;
    let batch_tokens = (cfg.batch_size * t_ctx) as u64;
    let mut records = Vec::with_capacity(cfg.steps);

    for _ in 0..cfg.steps {
        let batch = data.sample_batch(cfg.batch_size, t_ctx, &mut state.rng)?;
        let mut tape = Tape::new();
        let out = model.forward(&mut tape, &batch, &policy, true, &mut state.rng)?;
        let l_act = action_loss(&mut tape, out.logits, &batch.actions_target, &batch.pad)?;
        let (loss, loss_eff) = match stage {
            Stage::Dense => (l_act, 0.0),
            Stage::Gated => {
                let l_eff = efficiency_loss(
                    &mut tape,
                    &out.masks,
                    model.config.keep_spatial,
                    model.config.keep_temporal,
                )?;
                let v = tape.data(l_eff)[0];
                (total_loss(&mut tape, l_act, l_eff, cfg.alpha)?, v)
            }
        };
        let next_step = state.adam.step + 1;
        tape.check_finite(loss, "training loss")
            .map_err(|e| Error::Numerical(format!("step {next_step}: {e}")))?;
        tape.backward(loss)?;

        let grads: Vec<Vec<Real>> = opt_idx
            .iter()
            .map(|&i| tape.grad(out.param_ids[i]).expect("trainable leaf has a gradient").to_vec())
            .collect();
        let loss_action = tape.data(l_act)[0];
        let loss_total = tape.data(loss)[0];
        let keep_spatial_layers: Vec<Real> =
            out.masks.spatial.iter().map(|m| m.keep_ratio()).collect();
        let keep_temporal_layers: Vec<Real> =
            out.masks.temporal.iter().map(|m| m.keep_ratio()).collect();
        let keep_spatial = mean_keep(&out.masks.spatial);
        let keep_temporal = mean_keep(&out.masks.temporal);
        drop(tape);

        let mut refs = Vec::with_capacity(state.opt_names.len());
        let mut k = 0usize;
        for (name, t) in model.params.iter_mut() {
            if k < state.opt_names.len() && state.opt_names[k] == name {
                refs.push(ParamRef { data: &mut t.data, decay: decay_flags[k] });
                k += 1;
            }
        }
        debug_assert_eq!(k, state.opt_names.len());

        let stats = adam_step(&cfg.adam, &mut state.adam, &mut refs, &grads, batch_tokens)
            .map_err(|e| match e {
                Error::Numerical(msg) => Error::Numerical(format!("step {next_step}: {msg}")),
                other => other,
            })?;

        records.push(TrainRecord {
            step: state.adam.step,
            loss_action,
            loss_eff,
            loss_total,
            keep_spatial,
            keep_temporal,
            keep_spatial_layers,
            keep_temporal_layers,
            lr: stats.lr,
            grad_norm: stats.grad_norm,
        });
    }

    Ok(StageReport { records, final_state: state })
}

fn mean_keep(layers: &[crate::model::LayerMasks]) -> Real {
    if layers.is_empty() {
        return 1.0;
    }
    layers.iter().map(|m| m.keep_ratio()).sum::<Real>() / layers.len() as Real
}
