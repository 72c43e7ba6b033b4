//! Compact/non-compact classification of latent dimensions and the minimal
//! sufficient set for policy learning.

use crate::envs::StructuralMasks;
use crate::Result;

/// Disjoint split of the latent dimensions; the union is always `0..d` and
/// both halves are sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompactPartition {
    pub compact: Vec<usize>,
    pub non_compact: Vec<usize>,
}

/// A dimension is compact when it exerts any one-step influence outside
/// itself: it feeds the observation, feeds the reward, or feeds a *different*
/// latent dimension at the next step. A self-loop alone does not qualify.
pub fn compact_partition(masks: &StructuralMasks) -> Result<CompactPartition> {
    masks.validate_shape()?;
    let d = masks.dims();
    let mut out = CompactPartition { compact: Vec::new(), non_compact: Vec::new() };
    for i in 0..d {
        let feeds_other = (0..d).any(|j| j != i && masks.c_gg[j][i] == 1);
        if masks.c_go[i] == 1 || masks.c_gr[i] == 1 || feeds_other {
            out.compact.push(i);
        } else {
            out.non_compact.push(i);
        }
    }
    Ok(out)
}

/// The latent dimensions a reward-maximizing policy can ever need.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MinimalSet {
    /// Sorted dimensions with a latent-chain route into some future reward.
    pub dims: Vec<usize>,
    /// Set when no dimension feeds the reward at all; `dims` is then empty
    /// and the reward carries no information about the state.
    pub degenerate: bool,
}

/// Dimensions that either feed the reward directly (`c_gr`) or reach one that
/// does through a chain of latent transition edges. Computed by reverse
/// reachability from the reward-feeding set over `c_gg`.
pub fn minimal_sufficient_set(masks: &StructuralMasks) -> Result<MinimalSet> {
    masks.validate_shape()?;
    let d = masks.dims();
    let mut inset = vec![false; d];
    let mut stack = Vec::new();
    for i in 0..d {
        if masks.c_gr[i] == 1 {
            inset[i] = true;
            stack.push(i);
        }
    }
    let degenerate = stack.is_empty();
    while let Some(k) = stack.pop() {
        // j feeds k one step later.
        for j in 0..d {
            if masks.c_gg[k][j] == 1 && !inset[j] {
                inset[j] = true;
                stack.push(j);
            }
        }
    }
    let dims = (0..d).filter(|&i| inset[i]).collect();
    Ok(MinimalSet { dims, degenerate })
}
