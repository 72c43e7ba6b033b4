//! Pruning-invariance verification: does optimal action selection survive
//! zeroing the dimensions outside the minimal sufficient set?
//!
//! Optimal actions come from brute-force enumeration of every action sequence
//! over the evaluation horizon on the noise-free skeleton of the dynamics, so
//! the check is exact for the systems it accepts.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::causal::compact::minimal_sufficient_set;
use crate::envs::LatentMDPSpec;
use crate::numerics::Real;
use crate::{Error, Result};

/// Dimension cap for exact evaluation.
pub const MAX_PRUNE_DIMS: usize = 6;
/// Cap on `action_count ^ horizon` enumerated sequences.
pub const MAX_ACTION_SEQS: u64 = 1 << 16;

#[derive(Debug, Clone, PartialEq)]
pub struct PruneReport {
    /// Dimensions zeroed in the pruned evaluation, sorted.
    pub pruned: Vec<usize>,
    pub horizon: usize,
    pub samples: usize,
    /// States whose optimal action changed under pruning.
    pub disagreements: usize,
    pub fraction: Real,
}

fn check_capacity(spec: &LatentMDPSpec, horizon: usize) -> Result<()> {
    if spec.dims > MAX_PRUNE_DIMS {
        return Err(Error::Capacity(format!(
            "exact evaluation supports at most {MAX_PRUNE_DIMS} latent dims, spec has {}",
            spec.dims
        )));
    }
    let seqs = u32::try_from(horizon)
        .ok()
        .and_then(|h| (spec.action_count as u64).checked_pow(h))
        .filter(|&s| s <= MAX_ACTION_SEQS);
    if seqs.is_none() {
        return Err(Error::Capacity(format!(
            "{} actions over horizon {horizon} exceeds the {MAX_ACTION_SEQS}-sequence budget",
            spec.action_count
        )));
    }
    Ok(())
}

/// Noise-free step: expected reward from `(g, a)` and the deterministic
/// successor state, the previously received reward feeding the transition.
fn det_step(spec: &LatentMDPSpec, g: &[Real], a: usize, r_prev: Real) -> (Vec<Real>, Real) {
    let reward = spec.reward_map(g, a);
    let mut g_next = vec![0.0; spec.dims];
    for i in 0..spec.dims {
        let pre: Real = spec.w_gg[i].iter().zip(g).map(|(w, x)| w * x).sum::<Real>()
            + spec.w_ag[i][a]
            + spec.w_rg[i] * r_prev
            + spec.b_g[i];
        g_next[i] = spec.nonlinearity.apply(pre);
    }
    (g_next, reward)
}

/// Best discounted return over all action sequences of the given depth.
fn best_return(spec: &LatentMDPSpec, g: &[Real], r_prev: Real, depth: usize) -> Real {
    if depth == 0 {
        return 0.0;
    }
    let mut best = Real::NEG_INFINITY;
    for a in 0..spec.action_count {
        let (g_next, reward) = det_step(spec, g, a, r_prev);
        let v = reward + spec.gamma * best_return(spec, &g_next, reward, depth - 1);
        if v > best {
            best = v;
        }
    }
    best
}

/// Greedy-optimal first action from `g` over the horizon, ties resolved to
/// the lowest action id.
pub fn optimal_action(spec: &LatentMDPSpec, g: &[Real], horizon: usize) -> Result<usize> {
    spec.validate()?;
    if horizon == 0 {
        return Err(Error::Parameter("horizon must be at least one step".into()));
    }
    if g.len() != spec.dims {
        return Err(Error::Parameter(format!(
            "state has {} dims, spec has {}",
            g.len(),
            spec.dims
        )));
    }
    check_capacity(spec, horizon)?;
    let mut best = Real::NEG_INFINITY;
    let mut arg = 0;
    for a in 0..spec.action_count {
        let (g_next, reward) = det_step(spec, g, a, 0.0);
        let v = reward + spec.gamma * best_return(spec, &g_next, reward, horizon - 1);
        if v > best {
            best = v;
            arg = a;
        }
    }
    Ok(arg)
}

fn resolve_pruned(spec: &LatentMDPSpec, pruned: Option<&[usize]>) -> Result<Vec<usize>> {
    match pruned {
        Some(dims) => {
            let mut out = dims.to_vec();
            out.sort_unstable();
            if out.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::Parameter("pruned set holds a duplicate dimension".into()));
            }
            if out.last().is_some_and(|&i| i >= spec.dims) {
                return Err(Error::Parameter(format!(
                    "pruned dimension out of range for {} dims",
                    spec.dims
                )));
            }
            Ok(out)
        }
        None => {
            let minimal = minimal_sufficient_set(&spec.masks)?;
            Ok((0..spec.dims).filter(|i| !minimal.dims.contains(i)).collect())
        }
    }
}

/// Compare optimal actions from each state against the same state with the
/// pruned dimensions zeroed.
pub fn prune_disagreement_on_states(
    spec: &LatentMDPSpec,
    pruned: Option<&[usize]>,
    horizon: usize,
    states: &[Vec<Real>],
) -> Result<PruneReport> {
    spec.validate()?;
    if states.is_empty() {
        return Err(Error::Parameter("need at least one state to check".into()));
    }
    let pruned = resolve_pruned(spec, pruned)?;
    let mut disagreements = 0;
    for g in states {
        let full = optimal_action(spec, g, horizon)?;
        let mut cut = g.clone();
        for &i in &pruned {
            cut[i] = 0.0;
        }
        let reduced = optimal_action(spec, &cut, horizon)?;
        if full != reduced {
            disagreements += 1;
        }
    }
    Ok(PruneReport {
        pruned,
        horizon,
        samples: states.len(),
        disagreements,
        fraction: disagreements as Real / states.len() as Real,
    })
}

/// Sample initial states from the spec's start distribution and report the
/// fraction whose optimal action changes under pruning. `pruned: None` prunes
/// the complement of the minimal sufficient set, the configuration the
/// invariance claim is about.
pub fn prune_invariance_check(
    spec: &LatentMDPSpec,
    pruned: Option<&[usize]>,
    horizon: usize,
    samples: usize,
    seed: u64,
) -> Result<PruneReport> {
    if samples == 0 {
        return Err(Error::Parameter("need at least one sample".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let states: Vec<Vec<Real>> = (0..samples).map(|_| spec.init_state(&mut rng)).collect();
    prune_disagreement_on_states(spec, pruned, horizon, &states)
}
