//! Sequence model with adaptive token crediting.
//!
//! Two transformer stacks of equal depth: a bidirectional spatial stack
//! attends over per-step action/return/patch tokens, and a causal temporal
//! stack attends over the pooled credit tokens interleaved with a conv-encoded
//! state stream. Small credit heads score every token; stochastic binary
//! gates (straight-through at train time, thresholded at eval) multiply each
//! layer's input so the network learns which tokens carry credit.

mod checkpoint;
mod config;
mod forward;
mod params;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, TrainAux};
pub use config::ModelConfig;
pub use forward::{
    patchify, AdaCredModel, BoundParams, FixedMasks, ForwardOutput, LayerMasks, MaskPolicy,
    MaskState, KEEP_PREFIX,
};
pub use params::{decays, init_params, ParamStore};
