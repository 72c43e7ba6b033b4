//! Loss terms assembled on the tape graph.

use crate::model::MaskState;
use crate::numerics::{Real, Tape, TensorId};
use crate::{Error, Result};

/// Mean cross-entropy between next-action logits and the recorded actions,
/// skipping padded slots.
pub fn action_loss(
    tape: &mut Tape,
    logits: TensorId,
    actions_target: &[u16],
    pad: &[bool],
) -> Result<TensorId> {
    let targets: Vec<u32> = actions_target.iter().map(|&a| a as u32).collect();
    tape.masked_cross_entropy(logits, &targets, pad)
}

/// Width-weighted quadratic size penalty.
///
/// For each gated layer the penalty is `(w * (kept / valid - target))^2`
/// where `kept` counts active tokens, `valid` counts slots backed by real
/// steps (padding is excluded on both sides), `target` is the keep fraction,
/// and `w` scales by the layer's embedding width relative to the widest gated
/// layer (dropping a wide token saves more compute). The result is the mean
/// over all gated layers, built on the same tape as the forward pass so
/// gradients reach the credit heads.
pub fn efficiency_loss(
    tape: &mut Tape,
    masks: &MaskState,
    keep_spatial: Real,
    keep_temporal: Real,
) -> Result<TensorId> {
    let max_embed = masks
        .spatial
        .iter()
        .chain(&masks.temporal)
        .map(|m| m.embed_dim)
        .max()
        .ok_or_else(|| Error::Contract("efficiency loss over a model with no layers".into()))?;

    let mut acc: Option<TensorId> = None;
    let mut count = 0usize;
    let layers = masks
        .spatial
        .iter()
        .map(|m| (m, keep_spatial))
        .chain(masks.temporal.iter().map(|m| (m, keep_temporal)));
    for (m, keep) in layers {
        let sum = m.sum_id.ok_or_else(|| {
            Error::Contract("efficiency loss needs gate nodes; run the forward pass gated".into())
        })?;
        if m.valid == 0 {
            return Err(Error::Contract("size penalty over a fully padded batch".into()));
        }
        let omega = m.embed_dim as Real / max_embed as Real;
        // affine maps the raw sum to w * (sum / valid - keep).
        let a = omega / m.valid as Real;
        let b = -omega * keep;
        let dev = tape.affine(sum, a, b)?;
        let sq = tape.mul(dev, dev)?;
        acc = Some(match acc {
            None => sq,
            Some(prev) => tape.add(prev, sq)?,
        });
        count += 1;
    }
    let total = acc.ok_or_else(|| Error::Contract("efficiency loss over zero layers".into()))?;
    tape.scale(total, 1.0 / count as Real)
}

/// `action + alpha * efficiency`.
pub fn total_loss(
    tape: &mut Tape,
    action: TensorId,
    efficiency: TensorId,
    alpha: Real,
) -> Result<TensorId> {
    let weighted = tape.scale(efficiency, alpha)?;
    tape.add(action, weighted)
}
