//! Forward pass: per-step spatial attention over action/return/patch tokens,
//! pooled into a causal temporal stream that runs beside a conv state encoder.
//!
//! Each layer gates its own input. Credit scores come from the ungated
//! tokens, the binarized mask multiplies the tokens, and both the attention
//! path and the residual stream restart from the gated values, so a dropped
//! token contributes exactly nothing to that layer.

use std::collections::BTreeMap;

use rand::Rng;

use crate::dataset::{SequenceBatch, START_ACTION};
use crate::numerics::{Real, Tape, TensorId};
use crate::{Error, Result};

use super::config::ModelConfig;
use super::params::{init_params, ParamStore};

const LN_EPS: Real = 1e-5;

/// Leading spatial tokens that are never dropped: action and return-to-go.
pub const KEEP_PREFIX: usize = 2;

// ── Mask policies ──────────────────────────────────────────────────────────

/// Caller-supplied gate values, e.g. to ablate one patch at one layer.
/// Entries must be exactly 0.0 or 1.0.
#[derive(Debug, Clone)]
pub struct FixedMasks {
    /// One entry per layer, each `[b * t_ctx * spatial_tokens]` row-major.
    pub spatial: Vec<Vec<Real>>,
    /// One entry per layer, each `[b * 2 * t_ctx]` row-major.
    pub temporal: Vec<Vec<Real>>,
}

/// How the keep/drop gates behave during a forward pass.
#[derive(Debug, Clone)]
pub enum MaskPolicy {
    /// No gating ops are emitted at all.
    Off,
    /// Gates run with constant ones; the output must match `Off` bit for bit.
    ForceOn,
    /// Stochastic straight-through gates driven by the credit heads.
    Train,
    /// Deterministic gates: keep where the credit score is at least 0.5.
    Eval,
    /// Caller-provided gate values; credit heads are skipped.
    Fixed(FixedMasks),
}

// ── Mask bookkeeping ───────────────────────────────────────────────────────

/// Snapshot of one layer's gate decisions.
#[derive(Debug, Clone)]
pub struct LayerMasks {
    /// Binarized gate values after the keep-always rule, `[rows, row_width]`.
    /// Slots belonging to padded steps are forced to zero.
    pub values: Vec<Real>,
    pub rows: usize,
    pub row_width: usize,
    /// Kept tokens across all rows.
    pub active: usize,
    /// Slots backed by real (unpadded) steps; the keep ratio and the size
    /// penalty range over these only, so left-padding cannot absorb budget.
    pub valid: usize,
    /// Embedding width of the gated stream; weights the size penalty.
    pub embed_dim: usize,
    /// Tape node holding the mask sum, present whenever gate ops were
    /// emitted, so the size penalty can be built on the same graph.
    pub sum_id: Option<TensorId>,
}

impl LayerMasks {
    fn ungated(rows: usize, row_width: usize, embed_dim: usize) -> Self {
        LayerMasks {
            values: vec![1.0; rows * row_width],
            rows,
            row_width,
            active: rows * row_width,
            valid: rows * row_width,
            embed_dim,
            sum_id: None,
        }
    }

    fn from_tape(
        tape: &Tape,
        mask: TensorId,
        rows: usize,
        row_width: usize,
        valid: usize,
        embed_dim: usize,
        sum_id: Option<TensorId>,
    ) -> Self {
        let values = tape.data(mask).to_vec();
        let active = values.iter().filter(|v| **v == 1.0).count();
        LayerMasks { values, rows, row_width, active, valid, embed_dim, sum_id }
    }

    /// Mean kept tokens per row.
    pub fn active_per_row(&self) -> Real {
        self.active as Real / self.rows as Real
    }

    /// Kept fraction of the real (unpadded) slots.
    pub fn keep_ratio(&self) -> Real {
        self.active as Real / self.valid as Real
    }
}

/// Gate decisions for every layer of one forward pass.
#[derive(Debug, Clone)]
pub struct MaskState {
    pub spatial: Vec<LayerMasks>,
    pub temporal: Vec<LayerMasks>,
}

/// Result of one forward pass.
#[derive(Debug)]
pub struct ForwardOutput {
    /// `[b * t_ctx, action_count]` next-action logits, time-major per row.
    pub logits: TensorId,
    pub masks: MaskState,
    /// Leaf ids in `ParamStore` order; gradients are read back through these.
    pub param_ids: Vec<TensorId>,
}

// ── Parameter binding ──────────────────────────────────────────────────────

/// Tape leaves for every parameter of a store, bound in store order.
pub struct BoundParams {
    pub ids: Vec<TensorId>,
    by_name: BTreeMap<String, TensorId>,
}

impl BoundParams {
    pub fn bind(tape: &mut Tape, params: &ParamStore) -> Result<Self> {
        let mut ids = Vec::with_capacity(params.len());
        let mut by_name = BTreeMap::new();
        for (name, t) in params.iter() {
            let id = tape.leaf(t.data.clone(), t.shape.clone())?;
            ids.push(id);
            by_name.insert(name.to_string(), id);
        }
        Ok(BoundParams { ids, by_name })
    }

    pub fn id(&self, name: &str) -> Result<TensorId> {
        self.by_name
            .get(name)
            .copied()
            .ok_or_else(|| Error::Parameter(format!("unbound parameter {name:?}")))
    }
}

// ── Model ──────────────────────────────────────────────────────────────────

#[derive(Debug)]
pub struct AdaCredModel {
    pub config: ModelConfig,
    pub params: ParamStore,
}

impl AdaCredModel {
    /// Fresh model with seeded parameters.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        let params = init_params(&config, seed)?;
        Ok(AdaCredModel { config, params })
    }

    /// Wrap an existing parameter store (e.g. loaded from a checkpoint).
    pub fn from_parts(config: ModelConfig, params: ParamStore) -> Result<Self> {
        config.validate()?;
        let reference = init_params(&config, 0)?;
        for (name, t) in reference.iter() {
            let got = params.get(name).map_err(|_| {
                Error::Contract(format!("parameter store is missing {name:?} for this config"))
            })?;
            if got.shape != t.shape {
                return Err(Error::Contract(format!(
                    "parameter {name:?} has shape {:?}, config wants {:?}",
                    got.shape, t.shape
                )));
            }
        }
        if params.len() != reference.len() {
            return Err(Error::Contract(format!(
                "parameter store holds {} tensors, config wants {}",
                params.len(),
                reference.len()
            )));
        }
        Ok(AdaCredModel { config, params })
    }

    pub fn param_count(&self) -> usize {
        self.params.param_count()
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        batch: &SequenceBatch,
        policy: &MaskPolicy,
        train: bool,
        rng: &mut impl Rng,
    ) -> Result<ForwardOutput> {
        let cfg = &self.config;
        self.check_batch(batch)?;
        if let MaskPolicy::Fixed(f) = policy {
            self.check_fixed(f, batch.b)?;
        }

        let (b, t) = (batch.b, batch.t_ctx);
        let bt = b * t;
        let s_tok = cfg.spatial_tokens();
        let patches = cfg.patches_per_frame();
        let (ds, dt) = (cfg.spatial_embed, cfg.temporal_embed);
        let drop_p = if train { cfg.dropout } else { 0.0 };

        let bound = BoundParams::bind(tape, &self.params)?;

        // Per-step token embedding: action, return, then patch tokens.
        let patch_px = patchify(&batch.frames, bt, cfg.frame_h, cfg.frame_w, cfg.patch);
        let patch_in = tape.constant(patch_px, vec![bt * patches, cfg.patch_dim()])?;
        let patch_emb = tape.matmul(patch_in, bound.id("embed.patch.w")?)?;
        let patch_emb = tape.add(patch_emb, bound.id("embed.patch.b")?)?;
        let patch_emb = tape.reshape(patch_emb, vec![bt, patches, ds])?;

        let action_ids = self.action_token_ids(&batch.actions_prev)?;
        let act_emb = tape.embed(bound.id("embed.action.w")?, &action_ids)?;
        let act_emb = tape.reshape(act_emb, vec![bt, 1, ds])?;

        let rtg_scaled: Vec<Real> = batch.rtg.iter().map(|r| r / cfg.rtg_scale).collect();
        let rtg_in = tape.constant(rtg_scaled, vec![bt, 1])?;
        let rtg_emb = tape.matmul(rtg_in, bound.id("embed.rtg.w")?)?;
        let rtg_emb = tape.add(rtg_emb, bound.id("embed.rtg.b")?)?;
        let rtg_emb = tape.reshape(rtg_emb, vec![bt, 1, ds])?;

        let tokens = tape.concat_tokens(&[act_emb, rtg_emb, patch_emb])?;
        let mut x = tape.add(tokens, bound.id("embed.spatial_pos")?)?;

        // Pure-state stream from a small conv encoder over the raw frames.
        let temporal_pos = bound.id("embed.temporal_pos")?;
        let conv_in =
            tape.constant(batch.frames.clone(), vec![bt, 1, cfg.frame_h, cfg.frame_w])?;
        let c1 = tape.conv2d(conv_in, bound.id("conv.c1.w")?, bound.id("conv.c1.b")?, cfg.conv_stride)?;
        let c1 = tape.gelu(c1)?;
        let c2 = tape.conv2d(c1, bound.id("conv.c2.w")?, bound.id("conv.c2.b")?, cfg.conv_stride)?;
        let c2 = tape.gelu(c2)?;
        let (cc, ch, cw) = cfg.conv_dims()?;
        let cf = tape.reshape(c2, vec![bt, cc * ch * cw])?;
        let h0 = tape.matmul(cf, bound.id("conv.fc.w")?)?;
        let h0 = tape.add(h0, bound.id("conv.fc.b")?)?;
        let h0 = tape.reshape(h0, vec![b, t, dt])?;
        let mut h_stream = tape.add(h0, temporal_pos)?;

        let causal = tape.constant(causal_additive(2 * t), vec![2 * t, 2 * t])?;

        // Validity masks for the learned-gate policies: gates on left-padded
        // slots are forced to zero so they neither mix into attention nor
        // count toward the size budget. `batch.pad` is true on real steps.
        let learned = matches!(policy, MaskPolicy::Train | MaskPolicy::Eval);
        let (valid_s, valid_t, valid_s_count, valid_t_count) = if learned {
            let mut vs = vec![0.0; bt * s_tok];
            let mut vt = vec![0.0; b * 2 * t];
            for r in 0..bt {
                if batch.pad[r] {
                    vs[r * s_tok..(r + 1) * s_tok].fill(1.0);
                    vt[2 * r] = 1.0;
                    vt[2 * r + 1] = 1.0;
                }
            }
            let cs = vs.iter().filter(|v| **v == 1.0).count();
            let ct = vt.iter().filter(|v| **v == 1.0).count();
            (
                Some(tape.constant(vs, vec![bt, s_tok])?),
                Some(tape.constant(vt, vec![b, 2 * t])?),
                cs,
                ct,
            )
        } else {
            (None, None, 0, 0)
        };

        let mut spatial_masks = Vec::with_capacity(cfg.layers);
        let mut temporal_masks = Vec::with_capacity(cfg.layers);

        for l in 0..cfg.layers {
            // Spatial layer l over `[bt, s_tok, ds]`, bidirectional.
            let prefix = format!("spatial.{l}");
            let (x_gated, info) = match policy {
                MaskPolicy::Off => (x, LayerMasks::ungated(bt, s_tok, ds)),
                MaskPolicy::ForceOn => {
                    let ones = tape.constant(vec![1.0; bt * s_tok], vec![bt, s_tok])?;
                    (gate(tape, x, ones)?, LayerMasks::ungated(bt, s_tok, ds))
                }
                MaskPolicy::Train | MaskPolicy::Eval => {
                    let scores = credit_scores(tape, &bound, &prefix, x)?;
                    let raw = binarize(tape, policy, scores, cfg.tau, rng)?;
                    let mask = tape.force_ones_prefix(raw, KEEP_PREFIX)?;
                    let mask = tape.mul(mask, valid_s.expect("validity mask built"))?;
                    let sum = tape.sum(mask)?;
                    let gated = gate(tape, x, mask)?;
                    let info =
                        LayerMasks::from_tape(tape, mask, bt, s_tok, valid_s_count, ds, Some(sum));
                    (gated, info)
                }
                MaskPolicy::Fixed(f) => {
                    let raw = tape.constant(f.spatial[l].clone(), vec![bt, s_tok])?;
                    let mask = tape.force_ones_prefix(raw, KEEP_PREFIX)?;
                    let sum = tape.sum(mask)?;
                    let gated = gate(tape, x, mask)?;
                    let info =
                        LayerMasks::from_tape(tape, mask, bt, s_tok, bt * s_tok, ds, Some(sum));
                    (gated, info)
                }
            };
            spatial_masks.push(info);
            x = block(tape, &bound, &prefix, x_gated, cfg.spatial_heads, None, drop_p, rng)?;

            // Pool the surviving tokens into one temporal token per step.
            let pooled_in = tape.reshape(x, vec![bt, s_tok * ds])?;
            let pooled = tape.matmul(pooled_in, bound.id(&format!("pool.{l}.w"))?)?;
            let pooled = tape.add(pooled, bound.id(&format!("pool.{l}.b"))?)?;
            let pooled = tape.reshape(pooled, vec![b, t, dt])?;
            let g_l = tape.add(pooled, temporal_pos)?;

            // Temporal layer l over the interleaved credit/state stream
            // `[b, 2t, dt]`: credit tokens at even slots, state at odd.
            let y_in = tape.interleave(g_l, h_stream)?;
            let prefix = format!("temporal.{l}");
            let width = 2 * t;
            let (y_gated, info) = match policy {
                MaskPolicy::Off => (y_in, LayerMasks::ungated(b, width, dt)),
                MaskPolicy::ForceOn => {
                    let ones = tape.constant(vec![1.0; b * width], vec![b, width])?;
                    (gate(tape, y_in, ones)?, LayerMasks::ungated(b, width, dt))
                }
                MaskPolicy::Train | MaskPolicy::Eval => {
                    let scores = credit_scores(tape, &bound, &prefix, y_in)?;
                    let mask = if cfg.exempt_state_tokens {
                        // Gate only the even (credit) slots; state slots stay.
                        let s3 = tape.reshape(scores, vec![b, width, 1])?;
                        let g_scores = tape.take_every(s3, 0, 2)?;
                        let g_mask = binarize(tape, policy, g_scores, cfg.tau, rng)?;
                        let ones = tape.constant(vec![1.0; b * t], vec![b, t, 1])?;
                        let inter = tape.interleave(g_mask, ones)?;
                        tape.reshape(inter, vec![b, width])?
                    } else {
                        binarize(tape, policy, scores, cfg.tau, rng)?
                    };
                    let mask = tape.mul(mask, valid_t.expect("validity mask built"))?;
                    let sum = tape.sum(mask)?;
                    let gated = gate(tape, y_in, mask)?;
                    let info =
                        LayerMasks::from_tape(tape, mask, b, width, valid_t_count, dt, Some(sum));
                    (gated, info)
                }
                MaskPolicy::Fixed(f) => {
                    let mask = tape.constant(f.temporal[l].clone(), vec![b, width])?;
                    let sum = tape.sum(mask)?;
                    let gated = gate(tape, y_in, mask)?;
                    let info =
                        LayerMasks::from_tape(tape, mask, b, width, b * width, dt, Some(sum));
                    (gated, info)
                }
            };
            temporal_masks.push(info);
            let y_out =
                block(tape, &bound, &prefix, y_gated, cfg.temporal_heads, Some(causal), drop_p, rng)?;
            h_stream = tape.take_every(y_out, 1, 2)?;
        }

        let hn = tape.layer_norm(h_stream, bound.id("head.ln.g")?, bound.id("head.ln.b")?, LN_EPS)?;
        let hf = tape.reshape(hn, vec![bt, dt])?;
        let logits = tape.matmul(hf, bound.id("head.w")?)?;
        let logits = tape.add(logits, bound.id("head.b")?)?;

        Ok(ForwardOutput {
            logits,
            masks: MaskState { spatial: spatial_masks, temporal: temporal_masks },
            param_ids: bound.ids,
        })
    }

    fn check_batch(&self, batch: &SequenceBatch) -> Result<()> {
        let cfg = &self.config;
        if batch.b == 0 {
            return Err(Error::Contract("empty batch".into()));
        }
        if batch.t_ctx != cfg.t_ctx
            || batch.frame_h != cfg.frame_h
            || batch.frame_w != cfg.frame_w
        {
            return Err(Error::Contract(format!(
                "batch geometry t={} {}x{} does not match model t={} {}x{}",
                batch.t_ctx, batch.frame_h, batch.frame_w, cfg.t_ctx, cfg.frame_h, cfg.frame_w
            )));
        }
        Ok(())
    }

    fn check_fixed(&self, f: &FixedMasks, b: usize) -> Result<()> {
        let cfg = &self.config;
        if f.spatial.len() != cfg.layers || f.temporal.len() != cfg.layers {
            return Err(Error::Contract(format!(
                "fixed masks cover {}/{} layers, model has {}",
                f.spatial.len(),
                f.temporal.len(),
                cfg.layers
            )));
        }
        let s_len = b * cfg.t_ctx * cfg.spatial_tokens();
        let t_len = b * 2 * cfg.t_ctx;
        for (which, per_layer, want) in
            [("spatial", &f.spatial, s_len), ("temporal", &f.temporal, t_len)]
        {
            for (l, m) in per_layer.iter().enumerate() {
                if m.len() != want {
                    return Err(Error::Contract(format!(
                        "{which} mask for layer {l} holds {} values, want {want}",
                        m.len()
                    )));
                }
                if m.iter().any(|v| *v != 0.0 && *v != 1.0) {
                    return Err(Error::Parameter(format!(
                        "{which} mask for layer {l} holds non-binary values"
                    )));
                }
            }
        }
        Ok(())
    }

    fn action_token_ids(&self, actions_prev: &[u16]) -> Result<Vec<u32>> {
        let count = self.config.action_count;
        actions_prev
            .iter()
            .map(|&a| {
                if a == START_ACTION {
                    Ok(self.config.start_token_id() as u32)
                } else if (a as usize) < count {
                    Ok(a as u32)
                } else {
                    Err(Error::Parameter(format!(
                        "previous-action id {a} out of range ({count} actions)"
                    )))
                }
            })
            .collect()
    }
}

// ── Building blocks ────────────────────────────────────────────────────────

/// Rearrange `count` frames of `[h * w]` pixels into `[count * patches,
/// patch * patch]` rows, patches in row-major grid order.
pub fn patchify(frames: &[Real], count: usize, h: usize, w: usize, patch: usize) -> Vec<Real> {
    let (gh, gw) = (h / patch, w / patch);
    let mut out = vec![0.0; count * gh * gw * patch * patch];
    let mut o = 0;
    for f in 0..count {
        let base = f * h * w;
        for pr in 0..gh {
            for pc in 0..gw {
                for r in 0..patch {
                    let src = base + (pr * patch + r) * w + pc * patch;
                    out[o..o + patch].copy_from_slice(&frames[src..src + patch]);
                    o += patch;
                }
            }
        }
    }
    out
}

/// Additive causal mask: 0 at or below the diagonal, -inf above.
fn causal_additive(t: usize) -> Vec<Real> {
    let mut m = vec![0.0; t * t];
    for i in 0..t {
        for j in (i + 1)..t {
            m[i * t + j] = Real::NEG_INFINITY;
        }
    }
    m
}

fn binarize(
    tape: &mut Tape,
    policy: &MaskPolicy,
    scores: TensorId,
    tau: Real,
    rng: &mut impl Rng,
) -> Result<TensorId> {
    match policy {
        MaskPolicy::Train => tape.gumbel_st(scores, tau, rng),
        MaskPolicy::Eval => tape.hard_threshold(scores),
        _ => Err(Error::Contract("binarize requires the Train or Eval policy".into())),
    }
}

/// Keep/drop scores in (0, 1) for each token of `[n, s, d]`, as `[n, s]`.
fn credit_scores(
    tape: &mut Tape,
    bound: &BoundParams,
    prefix: &str,
    x: TensorId,
) -> Result<TensorId> {
    let shape = tape.shape(x).to_vec();
    let (n, s, d) = (shape[0], shape[1], shape[2]);
    let flat = tape.reshape(x, vec![n * s, d])?;
    let h = tape.matmul(flat, bound.id(&format!("{prefix}.credit.w1"))?)?;
    let h = tape.add(h, bound.id(&format!("{prefix}.credit.b1"))?)?;
    let h = tape.gelu(h)?;
    let o = tape.matmul(h, bound.id(&format!("{prefix}.credit.w2"))?)?;
    let o = tape.add(o, bound.id(&format!("{prefix}.credit.b2"))?)?;
    let o = tape.sigmoid(o)?;
    tape.reshape(o, vec![n, s])
}

/// Multiply each token row of `[n, s, d]` by its `[n, s]` gate value.
fn gate(tape: &mut Tape, x: TensorId, mask: TensorId) -> Result<TensorId> {
    let shape = tape.shape(x).to_vec();
    let (n, s, d) = (shape[0], shape[1], shape[2]);
    let fx = tape.reshape(x, vec![n * s, d])?;
    let fm = tape.reshape(mask, vec![n * s])?;
    let scaled = tape.row_scale(fx, fm)?;
    tape.reshape(scaled, vec![n, s, d])
}

fn maybe_dropout(
    tape: &mut Tape,
    x: TensorId,
    p: Real,
    rng: &mut impl Rng,
) -> Result<TensorId> {
    if p > 0.0 {
        tape.dropout(x, p, rng)
    } else {
        Ok(x)
    }
}

/// Linear projection reshaped for multi-head attention: `[n*s, d]` to
/// `[n * heads, s, dh]`.
fn head_proj(
    tape: &mut Tape,
    flat: TensorId,
    w: TensorId,
    b: TensorId,
    n: usize,
    s: usize,
    heads: usize,
    dh: usize,
) -> Result<TensorId> {
    let p = tape.matmul(flat, w)?;
    let p = tape.add(p, b)?;
    let p = tape.reshape(p, vec![n, s, heads, dh])?;
    let p = tape.permute(p, &[0, 2, 1, 3])?;
    tape.reshape(p, vec![n * heads, s, dh])
}

/// Pre-norm transformer block: attention then MLP, residual around each.
fn block(
    tape: &mut Tape,
    bound: &BoundParams,
    prefix: &str,
    x: TensorId,
    heads: usize,
    causal: Option<TensorId>,
    drop_p: Real,
    rng: &mut impl Rng,
) -> Result<TensorId> {
    let shape = tape.shape(x).to_vec();
    let (n, s, d) = (shape[0], shape[1], shape[2]);
    let dh = d / heads;

    let ln1 = tape.layer_norm(
        x,
        bound.id(&format!("{prefix}.ln1.g"))?,
        bound.id(&format!("{prefix}.ln1.b"))?,
        LN_EPS,
    )?;
    let flat = tape.reshape(ln1, vec![n * s, d])?;
    let q = head_proj(
        tape,
        flat,
        bound.id(&format!("{prefix}.attn.wq"))?,
        bound.id(&format!("{prefix}.attn.bq"))?,
        n,
        s,
        heads,
        dh,
    )?;
    let k = head_proj(
        tape,
        flat,
        bound.id(&format!("{prefix}.attn.wk"))?,
        bound.id(&format!("{prefix}.attn.bk"))?,
        n,
        s,
        heads,
        dh,
    )?;
    let v = head_proj(
        tape,
        flat,
        bound.id(&format!("{prefix}.attn.wv"))?,
        bound.id(&format!("{prefix}.attn.bv"))?,
        n,
        s,
        heads,
        dh,
    )?;
    let kt = tape.permute(k, &[0, 2, 1])?;
    let scores = tape.bmm(q, kt)?;
    let scores = tape.scale(scores, 1.0 / (dh as Real).sqrt())?;
    let scores = match causal {
        Some(c) => tape.add(scores, c)?,
        None => scores,
    };
    let probs = tape.softmax(scores, 2)?;
    let probs = maybe_dropout(tape, probs, drop_p, rng)?;
    let ctx = tape.bmm(probs, v)?;
    let ctx = tape.reshape(ctx, vec![n, heads, s, dh])?;
    let ctx = tape.permute(ctx, &[0, 2, 1, 3])?;
    let ctx = tape.reshape(ctx, vec![n * s, d])?;
    let att = tape.matmul(ctx, bound.id(&format!("{prefix}.attn.wo"))?)?;
    let att = tape.add(att, bound.id(&format!("{prefix}.attn.bo"))?)?;
    let att = maybe_dropout(tape, att, drop_p, rng)?;
    let att = tape.reshape(att, vec![n, s, d])?;
    let x = tape.add(x, att)?;

    let ln2 = tape.layer_norm(
        x,
        bound.id(&format!("{prefix}.ln2.g"))?,
        bound.id(&format!("{prefix}.ln2.b"))?,
        LN_EPS,
    )?;
    let mf = tape.reshape(ln2, vec![n * s, d])?;
    let h = tape.matmul(mf, bound.id(&format!("{prefix}.mlp.w1"))?)?;
    let h = tape.add(h, bound.id(&format!("{prefix}.mlp.b1"))?)?;
    let h = tape.gelu(h)?;
    let o = tape.matmul(h, bound.id(&format!("{prefix}.mlp.w2"))?)?;
    let o = tape.add(o, bound.id(&format!("{prefix}.mlp.b2"))?)?;
    let o = maybe_dropout(tape, o, drop_p, rng)?;
    let o = tape.reshape(o, vec![n, s, d])?;
    tape.add(x, o)
}
