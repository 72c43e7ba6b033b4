//! Causal-analysis contracts, each checked against an independent oracle:
//! d-separation vs. brute-force path enumeration, compact classification vs.
//! an edge scan over the constructed template graph, the minimal set vs.
//! d-separation on an unrolled graph, pruning invariance vs. exhaustive
//! return enumeration, and mask identification vs. generator ground truth.

use adacred_core::causal::{
    compact_partition, identify_relaxed, identify_structure, mask_f1, mask_values,
    minimal_sufficient_set, optimal_action, prune_disagreement_on_states, prune_invariance_check,
    reg_penalty, template_graph, unrolled_graph, CausalGraph, IdentifyConfig, RelaxedOptions,
};
use adacred_core::envs::{
    make_latent_mdp, rollout_latent_random, LatentGenConfig, LatentMDPSpec, LatentRollout,
    Nonlinearity, StructuralMasks,
};
use adacred_core::numerics::Real;
use adacred_core::Error;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// ── Path-enumeration oracle ────────────────────────────────────────────────

/// Brute-force d-separation: enumerate every simple undirected path between
/// the sets and test it against the chain/fork/collider rules directly.
fn oracle_d_sep(adj: &[Vec<bool>], x: &[usize], y: &[usize], z: &[usize]) -> bool {
    let n = adj.len();
    let mut in_z = vec![false; n];
    for &v in z {
        in_z[v] = true;
    }
    // desc_z[m]: m or one of its descendants is conditioned on.
    let mut desc_z = vec![false; n];
    for m in 0..n {
        let mut seen = vec![false; n];
        let mut stack = vec![m];
        seen[m] = true;
        while let Some(v) = stack.pop() {
            if in_z[v] {
                desc_z[m] = true;
                break;
            }
            for c in 0..n {
                if adj[v][c] && !seen[c] {
                    seen[c] = true;
                    stack.push(c);
                }
            }
        }
    }
    let active = |path: &[usize]| -> bool {
        for w in path.windows(3) {
            let (u, m, v) = (w[0], w[1], w[2]);
            let collider = adj[u][m] && adj[v][m];
            let open = if collider { desc_z[m] } else { !in_z[m] };
            if !open {
                return false;
            }
        }
        true
    };
    let in_y = {
        let mut f = vec![false; n];
        for &v in y {
            f[v] = true;
        }
        f
    };
    fn dfs(
        adj: &[Vec<bool>],
        in_y: &[bool],
        active: &dyn Fn(&[usize]) -> bool,
        path: &mut Vec<usize>,
        used: &mut Vec<bool>,
    ) -> bool {
        let cur = *path.last().unwrap();
        if in_y[cur] && active(path) {
            return true;
        }
        for next in 0..adj.len() {
            if !used[next] && (adj[cur][next] || adj[next][cur]) {
                used[next] = true;
                path.push(next);
                if dfs(adj, in_y, active, path, used) {
                    return true;
                }
                path.pop();
                used[next] = false;
            }
        }
        false
    }
    for &s in x {
        let mut used = vec![false; n];
        used[s] = true;
        let mut path = vec![s];
        if dfs(adj, &in_y, &active, &mut path, &mut used) {
            return false;
        }
    }
    true
}

fn graph_from_adj(adj: &[Vec<bool>]) -> CausalGraph {
    let mut g = CausalGraph::with_size(adj.len()).unwrap();
    for (u, row) in adj.iter().enumerate() {
        for (v, &e) in row.iter().enumerate() {
            if e {
                g.add_edge(u, v).unwrap();
            }
        }
    }
    g
}

/// All DAGs whose edges respect the identity topological order: one bit per
/// ordered pair `i < j`.
fn upper_triangular_dags(n: usize) -> Vec<Vec<Vec<bool>>> {
    let pairs: Vec<(usize, usize)> =
        (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    (0u32..1 << pairs.len())
        .map(|bits| {
            let mut adj = vec![vec![false; n]; n];
            for (b, &(i, j)) in pairs.iter().enumerate() {
                if bits >> b & 1 == 1 {
                    adj[i][j] = true;
                }
            }
            adj
        })
        .collect()
}

fn permute_adj(adj: &[Vec<bool>], perm: &[usize]) -> Vec<Vec<bool>> {
    let n = adj.len();
    let mut out = vec![vec![false; n]; n];
    for u in 0..n {
        for v in 0..n {
            if adj[u][v] {
                out[perm[u]][perm[v]] = true;
            }
        }
    }
    out
}

// ── d-separation ───────────────────────────────────────────────────────────

#[test]
fn chain_fork_and_collider_follow_the_textbook_rules() {
    // Chain a -> b -> c.
    let mut chain = CausalGraph::with_size(3).unwrap();
    chain.add_edge(0, 1).unwrap();
    chain.add_edge(1, 2).unwrap();
    assert!(chain.d_separated(&[0], &[2], &[1]).unwrap());
    assert!(!chain.d_separated(&[0], &[2], &[]).unwrap());

    // Fork a <- b -> c.
    let mut fork = CausalGraph::with_size(3).unwrap();
    fork.add_edge(1, 0).unwrap();
    fork.add_edge(1, 2).unwrap();
    assert!(fork.d_separated(&[0], &[2], &[1]).unwrap());
    assert!(!fork.d_separated(&[0], &[2], &[]).unwrap());

    // Collider a -> b <- c with descendant b -> d.
    let mut coll = CausalGraph::with_size(4).unwrap();
    coll.add_edge(0, 1).unwrap();
    coll.add_edge(2, 1).unwrap();
    coll.add_edge(1, 3).unwrap();
    assert!(coll.d_separated(&[0], &[2], &[]).unwrap());
    assert!(!coll.d_separated(&[0], &[2], &[1]).unwrap());
    assert!(!coll.d_separated(&[0], &[2], &[3]).unwrap(), "conditioned descendant opens the collider");
}

#[test]
fn d_separation_matches_path_enumeration_on_all_small_dags() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut queries = 0usize;
    for n in 2..=5usize {
        for base in upper_triangular_dags(n) {
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            for adj in [base.clone(), permute_adj(&base, &perm)] {
                let g = graph_from_adj(&adj);
                for x in 0..n {
                    for y in x + 1..n {
                        let rest: Vec<usize> = (0..n).filter(|&v| v != x && v != y).collect();
                        for zbits in 0u32..1 << rest.len() {
                            let z: Vec<usize> = rest
                                .iter()
                                .enumerate()
                                .filter(|(b, _)| zbits >> b & 1 == 1)
                                .map(|(_, &v)| v)
                                .collect();
                            let got = g.d_separated(&[x], &[y], &z).unwrap();
                            let want = oracle_d_sep(&adj, &[x], &[y], &z);
                            assert_eq!(got, want, "n={n} adj={adj:?} x={x} y={y} z={z:?}");
                            queries += 1;
                        }
                    }
                }
            }
        }
    }
    assert!(queries > 150_000, "exhaustive sweep shrank unexpectedly: {queries}");
}

proptest! {
    #[test]
    fn d_separation_matches_the_oracle_on_random_dags(
        n in 2usize..8,
        bits in proptest::collection::vec(any::<bool>(), 21),
        perm_seed in any::<u64>(),
        roles in proptest::collection::vec(0u8..4, 8),
    ) {
        let mut adj = vec![vec![false; n]; n];
        let mut b = 0;
        for i in 0..n {
            for j in i + 1..n {
                adj[i][j] = bits[b];
                b += 1;
            }
        }
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(perm_seed));
        let adj = permute_adj(&adj, &perm);
        let mut x = Vec::new();
        let mut y = Vec::new();
        let mut z = Vec::new();
        for v in 0..n {
            match roles[v] {
                1 => x.push(v),
                2 => y.push(v),
                3 => z.push(v),
                _ => {}
            }
        }
        let g = graph_from_adj(&adj);
        prop_assert_eq!(g.d_separated(&x, &y, &z).unwrap(), oracle_d_sep(&adj, &x, &y, &z));
    }
}

#[test]
fn d_separation_validates_its_node_sets() {
    let mut g = CausalGraph::with_size(3).unwrap();
    g.add_edge(0, 1).unwrap();
    let err = g.d_separated(&[0], &[7], &[]).unwrap_err();
    assert!(err.to_string().contains("unknown node"), "got {err}");
    let err = g.d_separated(&[0], &[1], &[0]).unwrap_err();
    assert!(err.to_string().contains("more than one"), "got {err}");
}

#[test]
fn graphs_reject_cycles_self_loops_and_duplicates() {
    let mut g = CausalGraph::with_size(3).unwrap();
    g.add_edge(0, 1).unwrap();
    g.add_edge(1, 2).unwrap();
    assert!(g.add_edge(2, 0).unwrap_err().to_string().contains("cycle"));
    assert!(g.add_edge(1, 1).unwrap_err().to_string().contains("self-loop"));
    assert!(g.add_edge(0, 1).unwrap_err().to_string().contains("duplicate"));
    assert!(g.add_edge(0, 9).is_err());
    assert_eq!(g.edge_count(), 2);
}

// ── Compact partition and minimal set ──────────────────────────────────────

fn bare_masks(d: usize) -> StructuralMasks {
    StructuralMasks {
        c_gg: vec![vec![0; d]; d],
        c_ag: vec![0; d],
        c_rg: vec![0; d],
        c_go: vec![0; d],
        c_gr: vec![0; d],
        c_ar: 0,
    }
}

#[test]
fn single_observed_dimension_is_the_only_compact_one() {
    let mut m = bare_masks(3);
    m.c_go[0] = 1;
    let p = compact_partition(&m).unwrap();
    assert_eq!(p.compact, vec![0]);
    assert_eq!(p.non_compact, vec![1, 2]);
}

#[test]
fn fully_connected_transitions_make_every_dimension_compact() {
    let mut m = bare_masks(3);
    m.c_gg = vec![vec![1; 3]; 3];
    let p = compact_partition(&m).unwrap();
    assert_eq!(p.compact, vec![0, 1, 2]);
    assert!(p.non_compact.is_empty());
}

#[test]
fn self_loops_alone_do_not_make_a_dimension_compact() {
    let mut m = bare_masks(2);
    m.c_gg[1][1] = 1;
    m.c_gr[0] = 1;
    let p = compact_partition(&m).unwrap();
    assert_eq!(p.compact, vec![0]);
    assert_eq!(p.non_compact, vec![1]);
}

#[test]
fn compact_partition_matches_an_edge_scan_over_the_template_graph() {
    for seed in 0..50u64 {
        let spec = make_latent_mdp(&LatentGenConfig::default(), seed).unwrap();
        let m = &spec.masks;
        let d = m.dims();
        let (g, nodes) = template_graph(m).unwrap();
        let from_graph: Vec<usize> = (0..d)
            .filter(|&i| {
                g.has_edge(nodes.latent_prev[i], nodes.reward)
                    || g.has_edge(nodes.latent_cur[i], nodes.obs)
                    || (0..d).any(|j| j != i && g.has_edge(nodes.latent_prev[i], nodes.latent_cur[j]))
            })
            .collect();
        let p = compact_partition(m).unwrap();
        assert_eq!(p.compact, from_graph, "seed {seed}");
        let mut union = p.compact.clone();
        union.extend(&p.non_compact);
        union.sort_unstable();
        assert_eq!(union, (0..d).collect::<Vec<_>>(), "seed {seed}");
    }
}

#[test]
fn latent_chains_into_the_reward_form_the_minimal_set() {
    // 0 -> 1 -> reward; 2 isolated apart from a self-loop.
    let mut m = bare_masks(3);
    m.c_gg[1][0] = 1;
    m.c_gg[2][2] = 1;
    m.c_gr[1] = 1;
    let set = minimal_sufficient_set(&m).unwrap();
    assert_eq!(set.dims, vec![0, 1]);
    assert!(!set.degenerate);
}

#[test]
fn unreachable_reward_is_flagged_degenerate() {
    let mut m = bare_masks(3);
    m.c_gg[1][0] = 1;
    m.c_go = vec![1, 1, 1];
    let set = minimal_sufficient_set(&m).unwrap();
    assert!(set.dims.is_empty());
    assert!(set.degenerate);
}

#[test]
fn minimal_set_is_always_inside_the_compact_set() {
    for seed in 0..50u64 {
        let spec = make_latent_mdp(&LatentGenConfig::default(), seed).unwrap();
        let set = minimal_sufficient_set(&spec.masks).unwrap();
        let p = compact_partition(&spec.masks).unwrap();
        for i in &set.dims {
            assert!(p.compact.contains(i), "seed {seed}: dim {i} minimal but not compact");
        }
    }
}

#[test]
fn minimal_membership_equals_reward_connectivity_in_the_unrolled_graph() {
    for seed in 0..30u64 {
        let spec = make_latent_mdp(&LatentGenConfig::default(), seed).unwrap();
        let d = spec.dims;
        let set = minimal_sufficient_set(&spec.masks).unwrap();
        let (g, nodes) = unrolled_graph(&spec.masks, d + 2).unwrap();
        let rewards: Vec<usize> = nodes.reward.clone();
        for i in 0..d {
            let x = [nodes.latent[0][i]];
            let z: Vec<usize> = set
                .dims
                .iter()
                .filter(|&&j| j != i)
                .map(|&j| nodes.latent[0][j])
                .collect();
            let separated = g.d_separated(&x, &rewards, &z).unwrap();
            assert_eq!(
                separated,
                !set.dims.contains(&i),
                "seed {seed} dim {i}: minimal membership and reward connectivity disagree"
            );
        }
    }
}

proptest! {
    #[test]
    fn random_masks_keep_minimal_inside_compact(
        d in 1usize..6,
        bits in proptest::collection::vec(any::<bool>(), 64),
    ) {
        let mut k = 0;
        let mut take = || {
            let b = u8::from(bits[k % bits.len()]);
            k += 1;
            b
        };
        let m = StructuralMasks {
            c_gg: (0..d).map(|_| (0..d).map(|_| take()).collect()).collect(),
            c_ag: (0..d).map(|_| take()).collect(),
            c_rg: (0..d).map(|_| take()).collect(),
            c_go: (0..d).map(|_| take()).collect(),
            c_gr: (0..d).map(|_| take()).collect(),
            c_ar: take(),
        };
        let set = minimal_sufficient_set(&m).unwrap();
        let p = compact_partition(&m).unwrap();
        for i in &set.dims {
            prop_assert!(p.compact.contains(i));
        }
    }
}

// ── Pruning invariance ─────────────────────────────────────────────────────

#[test]
fn pruning_outside_the_minimal_set_never_changes_the_optimal_action() {
    for (seed, nl) in (0..10u64).map(|s| (s, if s % 2 == 0 { Nonlinearity::Linear } else { Nonlinearity::Tanh })) {
        let cfg = LatentGenConfig { dims: 4, nonlinearity: nl, ..LatentGenConfig::default() };
        let spec = make_latent_mdp(&cfg, seed).unwrap();
        let report = prune_invariance_check(&spec, None, 4, 25, seed).unwrap();
        assert_eq!(report.disagreements, 0, "seed {seed}: {report:?}");
        assert_eq!(report.fraction, 0.0);
        // The generator reserves a provably non-compact sink dimension.
        assert!(report.pruned.contains(&(spec.dims - 1)), "seed {seed}: {report:?}");
    }
}

/// Saturating reward makes the optimal action depend on the state, so
/// removing a reward-feeding dimension must flip decisions somewhere.
fn saturating_spec() -> LatentMDPSpec {
    LatentMDPSpec {
        dims: 2,
        action_count: 2,
        obs_dim: 2,
        horizon: 2,
        gamma: 0.5,
        masks: StructuralMasks {
            c_gg: vec![vec![0, 0], vec![0, 0]],
            c_ag: vec![1, 0],
            c_rg: vec![0, 0],
            c_go: vec![1, 1],
            c_gr: vec![1, 1],
            c_ar: 1,
        },
        w_gg: vec![vec![0.0, 0.0], vec![0.0, 0.0]],
        w_ag: vec![vec![0.9, -0.9], vec![0.0, 0.0]],
        w_rg: vec![0.0, 0.0],
        b_g: vec![0.0, 0.0],
        w_obs: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        b_obs: vec![0.0, 0.0],
        w_gr: vec![1.0, 1.0],
        w_ar: vec![0.0, 0.8],
        b_r: 0.0,
        noise_g: 0.0,
        noise_obs: 0.0,
        noise_r: 0.0,
        nonlinearity: Nonlinearity::Tanh,
        init_scale: 1.0,
        frame_side: 7,
    }
}

#[test]
fn pruning_a_reward_feeding_dimension_flips_decisions() {
    let spec = saturating_spec();
    // Far into saturation the immediate-reward gap vanishes and the future
    // term favors action 0; near zero the immediate gap dominates.
    let states = vec![vec![-0.4, 2.4], vec![0.0, 0.0], vec![1.0, -1.0]];
    let report = prune_disagreement_on_states(&spec, Some(&[1]), 2, &states).unwrap();
    assert!(report.disagreements > 0, "{report:?}");

    let sampled = prune_invariance_check(&spec, Some(&[1]), 2, 200, 3).unwrap();
    assert!(sampled.fraction > 0.0, "{sampled:?}");
}

#[test]
fn single_dimension_specs_agree_by_construction() {
    let mut spec = saturating_spec();
    spec.dims = 1;
    spec.obs_dim = 1;
    spec.masks = StructuralMasks {
        c_gg: vec![vec![0]],
        c_ag: vec![1],
        c_rg: vec![0],
        c_go: vec![1],
        c_gr: vec![1],
        c_ar: 1,
    };
    spec.w_gg = vec![vec![0.0]];
    spec.w_ag = vec![vec![0.9, -0.9]];
    spec.w_rg = vec![0.0];
    spec.b_g = vec![0.0];
    spec.w_obs = vec![vec![1.0]];
    spec.b_obs = vec![0.0];
    spec.w_gr = vec![1.0];
    let report = prune_invariance_check(&spec, None, 3, 20, 0).unwrap();
    assert!(report.pruned.is_empty());
    assert_eq!(report.fraction, 0.0);
}

#[test]
fn exact_evaluation_refuses_oversized_problems() {
    let cfg = LatentGenConfig { dims: 7, ..LatentGenConfig::default() };
    let spec = make_latent_mdp(&cfg, 0).unwrap();
    let err = prune_invariance_check(&spec, None, 3, 5, 0).unwrap_err();
    assert!(matches!(err, Error::Capacity(_)), "got {err:?}");

    let spec = make_latent_mdp(&LatentGenConfig::default(), 0).unwrap();
    let err = prune_invariance_check(&spec, None, 20, 5, 0).unwrap_err();
    assert!(matches!(err, Error::Capacity(_)), "got {err:?}");
}

#[test]
fn equivalent_actions_resolve_to_the_lowest_id() {
    let mut spec = saturating_spec();
    // Strip every action influence: all returns tie exactly.
    spec.masks.c_ag = vec![0, 0];
    spec.masks.c_ar = 0;
    spec.w_ag = vec![vec![0.0, 0.0], vec![0.0, 0.0]];
    spec.w_ar = vec![0.0, 0.0];
    assert_eq!(optimal_action(&spec, &[0.3, -0.2], 3).unwrap(), 0);
}

#[test]
fn pruned_sets_are_validated() {
    let spec = saturating_spec();
    let err = prune_invariance_check(&spec, Some(&[0, 0]), 2, 5, 0).unwrap_err();
    assert!(err.to_string().contains("duplicate"), "got {err}");
    let err = prune_invariance_check(&spec, Some(&[5]), 2, 5, 0).unwrap_err();
    assert!(err.to_string().contains("out of range"), "got {err}");
}

// ── Identification ─────────────────────────────────────────────────────────

/// Hand-built linear spec with a mixed edge set and zero noise.
fn crafted_spec() -> LatentMDPSpec {
    LatentMDPSpec {
        dims: 3,
        action_count: 2,
        obs_dim: 3,
        horizon: 30,
        gamma: 0.99,
        masks: StructuralMasks {
            c_gg: vec![vec![1, 0, 0], vec![1, 0, 0], vec![0, 1, 0]],
            c_ag: vec![1, 0, 1],
            c_rg: vec![0, 1, 0],
            c_go: vec![1, 1, 0],
            c_gr: vec![0, 0, 1],
            c_ar: 1,
        },
        w_gg: vec![vec![0.4, 0.0, 0.0], vec![0.5, 0.0, 0.0], vec![0.0, 0.4, 0.0]],
        w_ag: vec![vec![0.6, -0.6], vec![0.0, 0.0], vec![0.5, -0.2]],
        w_rg: vec![0.0, 0.3, 0.0],
        b_g: vec![0.05, -0.02, 0.01],
        w_obs: vec![
            vec![0.8, 0.3, 0.0],
            vec![-0.5, 0.7, 0.0],
            vec![0.2, -0.6, 0.0],
        ],
        b_obs: vec![0.0, 0.1, -0.1],
        w_gr: vec![0.0, 0.0, 0.7],
        w_ar: vec![0.4, -0.3],
        b_r: 0.1,
        noise_g: 0.0,
        noise_obs: 0.0,
        noise_r: 0.0,
        nonlinearity: Nonlinearity::Linear,
        init_scale: 1.0,
        frame_side: 7,
    }
}

fn collect_rollouts(spec: &LatentMDPSpec, count: usize, steps: usize, seed: u64) -> Vec<LatentRollout> {
    (0..count)
        .map(|i| rollout_latent_random(spec, steps, seed.wrapping_add(i as u64)).unwrap())
        .collect()
}

#[test]
fn noise_free_linear_specs_are_recovered_exactly() {
    let spec = crafted_spec();
    let rollouts = collect_rollouts(&spec, 150, 10, 40);
    let est = identify_structure(&rollouts, spec.action_count, &IdentifyConfig::default()).unwrap();
    assert_eq!(est.masks, spec.masks);
    assert_eq!(mask_f1(&est.masks, &spec.masks).unwrap(), 1.0);
    assert_eq!(est.tests, 9 + 3 + 3 + 3 + 1 + 9);
}

#[test]
fn noisy_specs_reach_high_edge_recovery() {
    let cfg = LatentGenConfig { dims: 3, noise: 0.1, ..LatentGenConfig::default() };
    for seed in [3u64, 9] {
        let spec = make_latent_mdp(&cfg, seed).unwrap();
        let rollouts = collect_rollouts(&spec, 150, 20, 100 + seed);
        let est =
            identify_structure(&rollouts, spec.action_count, &IdentifyConfig::default()).unwrap();
        let f1 = mask_f1(&est.masks, &spec.masks).unwrap();
        assert!(f1 >= 0.9, "seed {seed}: F1 {f1}\nest {:?}\ntruth {:?}", est.masks, spec.masks);
    }
}

#[test]
fn temporally_shuffled_data_yields_no_transition_edges() {
    let spec = crafted_spec();
    let mut noisy = spec.clone();
    noisy.noise_g = 0.1;
    noisy.noise_obs = 0.1;
    noisy.noise_r = 0.1;
    let src = rollout_latent_random(&noisy, 2000, 77).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(78);
    let pick = |n: usize, rng: &mut ChaCha8Rng| rng.gen_range(0..n);
    let nulls: Vec<LatentRollout> = (0..1500)
        .map(|_| {
            let (i, j, k) =
                (pick(2000, &mut rng), pick(2000, &mut rng), pick(2000, &mut rng));
            LatentRollout {
                states: vec![src.states[i].clone(), src.states[j].clone()],
                actions: vec![src.actions[k]],
                rewards: vec![src.rewards[pick(2000, &mut rng)]],
                rewards_prev: vec![src.rewards_prev[pick(2000, &mut rng)]],
                observations: vec![src.observations[pick(2000, &mut rng)].clone()],
            }
        })
        .collect();
    let est = identify_structure(&nulls, spec.action_count, &IdentifyConfig::default()).unwrap();
    let edges: usize = est.masks.c_gg.iter().flatten().map(|&b| b as usize).sum();
    assert!(edges <= 1, "shuffled data produced {edges} transition edges: {:?}", est.masks.c_gg);
}

#[test]
fn identification_demands_enough_transitions() {
    let spec = crafted_spec();
    let rollouts = collect_rollouts(&spec, 1, 10, 0);
    let err =
        identify_structure(&rollouts, spec.action_count, &IdentifyConfig::default()).unwrap_err();
    assert!(matches!(err, Error::Statistics(_)), "got {err:?}");
}

#[test]
fn identification_validates_rollout_consistency() {
    let spec = crafted_spec();
    let mut rollouts = collect_rollouts(&spec, 2, 10, 0);
    rollouts[1].actions[0] = 9;
    let err =
        identify_structure(&rollouts, spec.action_count, &IdentifyConfig::default()).unwrap_err();
    assert!(matches!(err, Error::Parameter(_)), "got {err:?}");
    let err = identify_structure(&[], 2, &IdentifyConfig::default()).unwrap_err();
    assert!(matches!(err, Error::Parameter(_)), "got {err:?}");
}

#[test]
fn f1_counts_missing_and_spurious_edges() {
    let mut truth = bare_masks(2);
    truth.c_gg[0][0] = 1;
    truth.c_gr[0] = 1;
    let mut est = bare_masks(2);
    est.c_gg[0][0] = 1;
    est.c_ag[0] = 1;
    assert!((mask_f1(&est, &truth).unwrap() - 0.5).abs() < 1e-6);
    assert_eq!(mask_f1(&bare_masks(2), &bare_masks(2)).unwrap(), 1.0);
}

// ── Sparsity penalty ───────────────────────────────────────────────────────

#[test]
fn penalty_is_lambda_times_total_l1_mass() {
    assert_eq!(reg_penalty(&[], 0.1).unwrap(), 0.0);
    let mut m = bare_masks(3);
    m.c_gg[0][1] = 1;
    m.c_gg[2][0] = 1;
    m.c_gr[1] = 1;
    let vals = mask_values(&m);
    let theta = [0.0f32 as Real; 4];
    let p = reg_penalty(&[&vals, &theta], 0.1).unwrap();
    assert!((p - 0.3).abs() < 1e-6);
    assert!(reg_penalty(&[&vals], -0.5).is_err());
    assert!(reg_penalty(&[&vals], Real::NAN).is_err());
}

#[test]
fn l1_penalty_suppresses_false_positive_edges() {
    let cfg = LatentGenConfig { dims: 3, noise: 0.15, ..LatentGenConfig::default() };
    let plain = RelaxedOptions { lambda: 0.0, threshold: 0.06 };
    let penalized = RelaxedOptions { lambda: 0.05, threshold: 0.06 };
    let mut fp_plain = 0usize;
    let mut fp_pen = 0usize;
    for seed in 0..20u64 {
        let spec = make_latent_mdp(&cfg, seed).unwrap();
        let rollouts = collect_rollouts(&spec, 60, 10, 500 + seed);
        let mask_plain = identify_relaxed(&rollouts, spec.action_count, &plain).unwrap();
        let mask_pen = identify_relaxed(&rollouts, spec.action_count, &penalized).unwrap();
        let fp = |est: &StructuralMasks| {
            mask_values(est)
                .iter()
                .zip(mask_values(&spec.masks))
                .filter(|(e, t)| **e == 1.0 && *t == 0.0)
                .count()
        };
        fp_plain += fp(&mask_plain);
        fp_pen += fp(&mask_pen);
    }
    assert!(
        fp_pen < fp_plain,
        "penalty did not reduce false positives: {fp_pen} vs {fp_plain}"
    );
}
