//! Named parameter storage with seeded initialization.
//!
//! Parameters live outside the tape; each forward pass binds them as leaves.
//! Names are stable across runs and are the unit the trainer filters on
//! (weight decay, credit-head freezing), so they are part of the checkpoint
//! format and must not be renamed casually.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::numerics::{Real, Tensor};
use crate::{Error, Result};

use super::config::ModelConfig;

// ── Store ──────────────────────────────────────────────────────────────────

/// Insertion-ordered map from parameter name to tensor.
#[derive(Debug, Clone)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: BTreeMap<String, usize>,
}

impl ParamStore {
    pub fn empty() -> Self {
        ParamStore { names: Vec::new(), tensors: Vec::new(), index: BTreeMap::new() }
    }

    pub fn insert(&mut self, name: &str, tensor: Tensor) -> Result<()> {
        if self.index.contains_key(name) {
            return Err(Error::Parameter(format!("duplicate parameter name {name:?}")));
        }
        self.index.insert(name.to_string(), self.names.len());
        self.names.push(name.to_string());
        self.tensors.push(tensor);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        let idx = self
            .index
            .get(name)
            .ok_or_else(|| Error::Parameter(format!("unknown parameter {name:?}")))?;
        Ok(&self.tensors[*idx])
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        let idx = self
            .index
            .get(name)
            .ok_or_else(|| Error::Parameter(format!("unknown parameter {name:?}")))?;
        Ok(&mut self.tensors[*idx])
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Total scalar count across all tensors.
    pub fn param_count(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(self.tensors.iter())
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.names.iter().map(String::as_str).zip(self.tensors.iter_mut())
    }

    /// True when `other` has the same names, shapes, and bit-identical data.
    pub fn bit_eq(&self, other: &ParamStore) -> bool {
        self.names == other.names
            && self
                .tensors
                .iter()
                .zip(other.tensors.iter())
                .all(|(a, b)| {
                    a.shape == b.shape
                        && a.data.len() == b.data.len()
                        && a.data
                            .iter()
                            .zip(b.data.iter())
                            .all(|(x, y)| x.to_bits() == y.to_bits())
                })
    }
}

/// Whether AdamW applies weight decay to this parameter.
///
/// Matrices decay; biases, gains, embedding tables, and positional tables do
/// not. Tables are identified by name because they are 2-d.
pub fn decays(name: &str, tensor: &Tensor) -> bool {
    tensor.shape.len() >= 2 && !name.starts_with("embed.") && !name.contains("pos")
}

// ── Initialization ─────────────────────────────────────────────────────────

const INIT_STD: Real = 0.02;

/// Bias of the credit-head output unit. sigmoid(2) = 0.88, so freshly
/// initialized heads keep nearly everything and pruning anneals downward.
const CREDIT_BIAS_INIT: Real = 2.0;

fn normal(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    Tensor::randn(shape.to_vec(), INIT_STD, rng)
}

fn zeros(shape: &[usize]) -> Tensor {
    Tensor::zeros(shape.to_vec(), true)
}

fn filled(shape: &[usize], value: Real) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::new(vec![value; n], shape.to_vec(), true).expect("consistent shape")
}

fn ones(shape: &[usize]) -> Tensor {
    filled(shape, 1.0)
}

fn insert_block_params(
    store: &mut ParamStore,
    rng: &mut ChaCha8Rng,
    prefix: &str,
    embed: usize,
    mlp_ratio: usize,
) -> Result<()> {
    let hidden = embed * mlp_ratio;
    store.insert(&format!("{prefix}.ln1.g"), ones(&[embed]))?;
    store.insert(&format!("{prefix}.ln1.b"), zeros(&[embed]))?;
    for proj in ["wq", "wk", "wv", "wo"] {
        store.insert(&format!("{prefix}.attn.{proj}"), normal(rng, &[embed, embed]))?;
    }
    for bias in ["bq", "bk", "bv", "bo"] {
        store.insert(&format!("{prefix}.attn.{bias}"), zeros(&[embed]))?;
    }
    store.insert(&format!("{prefix}.ln2.g"), ones(&[embed]))?;
    store.insert(&format!("{prefix}.ln2.b"), zeros(&[embed]))?;
    store.insert(&format!("{prefix}.mlp.w1"), normal(rng, &[embed, hidden]))?;
    store.insert(&format!("{prefix}.mlp.b1"), zeros(&[hidden]))?;
    store.insert(&format!("{prefix}.mlp.w2"), normal(rng, &[hidden, embed]))?;
    store.insert(&format!("{prefix}.mlp.b2"), zeros(&[embed]))?;
    Ok(())
}

fn insert_credit_params(
    store: &mut ParamStore,
    rng: &mut ChaCha8Rng,
    prefix: &str,
    embed: usize,
) -> Result<()> {
    let hidden = (embed / 4).max(1);
    store.insert(&format!("{prefix}.credit.w1"), normal(rng, &[embed, hidden]))?;
    store.insert(&format!("{prefix}.credit.b1"), zeros(&[hidden]))?;
    store.insert(&format!("{prefix}.credit.w2"), normal(rng, &[hidden, 1]))?;
    store.insert(&format!("{prefix}.credit.b2"), filled(&[1], CREDIT_BIAS_INIT))?;
    Ok(())
}

/// Build every parameter of the model at `seed`. The layout (and therefore
/// the optimizer state order) is a function of the config alone.
pub fn init_params(config: &ModelConfig, seed: u64) -> Result<ParamStore> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rng = &mut rng;
    let mut store = ParamStore::empty();

    let ds = config.spatial_embed;
    let dt = config.temporal_embed;
    let s_tokens = config.spatial_tokens();

    // Token embeddings. The action table has one extra row for the
    // episode-start sentinel fed as the "previous action" at t = 0.
    store.insert("embed.patch.w", normal(rng, &[config.patch_dim(), ds]))?;
    store.insert("embed.patch.b", zeros(&[ds]))?;
    store.insert("embed.action.w", normal(rng, &[config.action_count + 1, ds]))?;
    store.insert("embed.rtg.w", normal(rng, &[1, ds]))?;
    store.insert("embed.rtg.b", zeros(&[ds]))?;
    store.insert("embed.spatial_pos", normal(rng, &[s_tokens, ds]))?;

    for l in 0..config.layers {
        let p = format!("spatial.{l}");
        insert_block_params(&mut store, rng, &p, ds, config.mlp_ratio)?;
        insert_credit_params(&mut store, rng, &p, ds)?;
        // Pools the surviving spatial tokens of layer l into one temporal token.
        store.insert(&format!("pool.{l}.w"), normal(rng, &[s_tokens * ds, dt]))?;
        store.insert(&format!("pool.{l}.b"), zeros(&[dt]))?;
    }

    // Pure-state conv encoder: two valid convolutions then a linear read-out.
    let k = config.conv_kernel;
    store.insert("conv.c1.w", normal(rng, &[config.conv_c1, 1, k, k]))?;
    store.insert("conv.c1.b", zeros(&[config.conv_c1]))?;
    store.insert("conv.c2.w", normal(rng, &[config.conv_c2, config.conv_c1, k, k]))?;
    store.insert("conv.c2.b", zeros(&[config.conv_c2]))?;
    let (c2, h2, w2) = config.conv_dims()?;
    store.insert("conv.fc.w", normal(rng, &[c2 * h2 * w2, dt]))?;
    store.insert("conv.fc.b", zeros(&[dt]))?;

    store.insert("embed.temporal_pos", normal(rng, &[config.t_ctx, dt]))?;

    for l in 0..config.layers {
        let p = format!("temporal.{l}");
        insert_block_params(&mut store, rng, &p, dt, config.mlp_ratio)?;
        insert_credit_params(&mut store, rng, &p, dt)?;
    }

    store.insert("head.ln.g", ones(&[dt]))?;
    store.insert("head.ln.b", zeros(&[dt]))?;
    store.insert("head.w", normal(rng, &[dt, config.action_count]))?;
    store.insert("head.b", zeros(&[config.action_count]))?;

    Ok(store)
}
