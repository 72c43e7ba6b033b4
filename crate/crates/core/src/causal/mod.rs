//! Causal analysis of the latent environments: d-separation over structural
//! graphs, compact/minimal classification of latent dimensions, exact
//! pruning-invariance verification, and mask recovery from rollouts.

mod compact;
mod graph;
mod identify;
mod prune;

pub use compact::{compact_partition, minimal_sufficient_set, CompactPartition, MinimalSet};
pub use graph::{template_graph, unrolled_graph, CausalGraph, TemplateNodes, UnrolledNodes};
pub use identify::{
    identify_relaxed, identify_structure, mask_f1, mask_values, reg_penalty, IdentifiedStructure,
    IdentifyConfig, RelaxedOptions,
};
pub use prune::{
    optimal_action, prune_disagreement_on_states, prune_invariance_check, PruneReport,
    MAX_ACTION_SEQS, MAX_PRUNE_DIMS,
};
