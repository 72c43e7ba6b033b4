//! Environment tests. The latent POMDP is checked against a closed-form
//! matrix-power oracle in the linear noise-free regime, plus exact
//! no-influence checks for masked edges. The gridworld is checked for render
//! geometry, reward semantics, and the distractor band's isolation.

use adacred_core::dataset::START_ACTION;
use adacred_core::envs::gridworld::{self, GridWorldSpec, GridWorldState};
use adacred_core::envs::latent::{
    rollout_latent_random, LatentGenConfig, LatentMDPSpec, Nonlinearity,
};
use adacred_core::envs::{
    make_latent_mdp, rollout, rollout_many, step_latent, Environment, GridWorldEnv, LatentEnv,
    Policy,
};
use adacred_core::numerics::Real;
use adacred_core::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn linear_cfg(dims: usize, noise: Real) -> LatentGenConfig {
    LatentGenConfig { dims, noise, horizon: 20, ..LatentGenConfig::default() }
}

// ── Latent POMDP ─────────────────────────────────────────────────────────────

#[test]
fn generated_specs_are_deterministic_and_valid() {
    for seed in 0..30 {
        let a = make_latent_mdp(&linear_cfg(4, 0.1), seed).unwrap();
        let b = make_latent_mdp(&linear_cfg(4, 0.1), seed).unwrap();
        assert_eq!(a, b, "seed {seed} produced two different specs");
        a.validate().unwrap();
        // Stability rescale: row sums of |w_gg| stay at or below 0.9.
        let norm: Real = a
            .w_gg
            .iter()
            .map(|r| r.iter().map(|v| v.abs()).sum::<Real>())
            .fold(0.0, Real::max);
        assert!(norm <= 0.9 + 1e-5, "seed {seed}: transition norm {norm}");
        assert!(a.masks.c_gr.contains(&1), "seed {seed}: reward unreachable");
    }
    let a = make_latent_mdp(&linear_cfg(4, 0.1), 0).unwrap();
    let b = make_latent_mdp(&linear_cfg(4, 0.1), 1).unwrap();
    assert_ne!(a, b, "different seeds should differ");
}

#[test]
fn generated_specs_reserve_a_disconnected_sink_dimension() {
    for seed in 0..10 {
        let spec = make_latent_mdp(&linear_cfg(5, 0.1), seed).unwrap();
        let sink = spec.dims - 1;
        assert_eq!(spec.masks.c_go[sink], 0);
        assert_eq!(spec.masks.c_gr[sink], 0);
        for i in 0..spec.dims {
            assert_eq!(spec.masks.c_gg[i][sink], 0, "seed {seed}: sink feeds dim {i}");
        }
    }
}

#[test]
fn spec_json_round_trips_exactly() {
    let spec = make_latent_mdp(&linear_cfg(4, 0.05), 3).unwrap();
    let json = spec.to_json().unwrap();
    let back = LatentMDPSpec::from_json(&json).unwrap();
    assert_eq!(spec, back);
}

#[test]
fn malformed_or_inconsistent_specs_are_rejected() {
    assert!(LatentMDPSpec::from_json("{not json").is_err());

    // A weight on a masked-out edge must fail validation.
    let mut spec = make_latent_mdp(&linear_cfg(4, 0.1), 0).unwrap();
    let sink = spec.dims - 1;
    spec.w_gg[0][sink] = 0.5; // mask for this edge is zero by construction
    let err = spec.validate().unwrap_err();
    assert!(err.to_string().contains("nonzero under zero mask"), "unexpected: {err}");

    // An unstable transition matrix must fail validation.
    let mut spec = make_latent_mdp(&linear_cfg(4, 0.1), 0).unwrap();
    for j in 0..spec.dims {
        if spec.masks.c_gg[0][j] == 1 {
            spec.w_gg[0][j] = 2.0;
        }
    }
    spec.masks.c_gg[0][0] = 1;
    spec.w_gg[0][0] = 2.0;
    assert!(spec.validate().is_err());
}

/// Closed-form oracle for the noise-free linear dynamics: propagate the
/// expected state with explicit matrix powers at f64 and compare against the
/// iterative stepper.
#[test]
fn linear_dynamics_match_matrix_power_oracle() {
    let spec = make_latent_mdp(&linear_cfg(4, 0.0), 17).unwrap();
    let d = spec.dims;
    let steps = 15;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let g0 = spec.init_state(&mut rng);
    let actions: Vec<usize> = (0..steps).map(|t| t % spec.action_count).collect();

    // Iterative path under test.
    let mut g = g0.clone();
    let mut r_prev: Real = 0.0;
    let mut iter_states = vec![g0.clone()];
    let mut iter_rewards = Vec::new();
    for &a in &actions {
        let (gn, _o, r) = step_latent(&spec, &g, a, r_prev, &mut rng).unwrap();
        iter_rewards.push(r);
        r_prev = r;
        g = gn;
        iter_states.push(g.clone());
    }

    // Closed form: g_t = A^t g_0 + sum_k A^(t-1-k) u_k with
    // u_k = w_ag[a_k] + w_rg * r_prev_k + b, all at f64.
    let a64: Vec<Vec<f64>> =
        spec.w_gg.iter().map(|r| r.iter().map(|&v| v as f64).collect()).collect();
    let matvec = |m: &[Vec<f64>], x: &[f64]| -> Vec<f64> {
        m.iter().map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
    };
    let matmul = |m: &[Vec<f64>], n: &[Vec<f64>]| -> Vec<Vec<f64>> {
        (0..d)
            .map(|i| (0..d).map(|j| (0..d).map(|k| m[i][k] * n[k][j]).sum()).collect())
            .collect()
    };
    let mut powers: Vec<Vec<Vec<f64>>> =
        vec![(0..d).map(|i| (0..d).map(|j| f64::from(i == j)).collect()).collect()];
    for t in 0..steps {
        let next = matmul(&powers[t], &a64);
        powers.push(next);
    }
    let g0_64: Vec<f64> = g0.iter().map(|&v| v as f64).collect();
    let mut r_prevs = vec![0.0f64];
    for t in 1..=steps {
        // Reward at step t-1 from the oracle state at t-1.
        let gt: Vec<f64> = {
            let mut acc = matvec(&powers[t - 1], &g0_64);
            for k in 0..t - 1 {
                let u: Vec<f64> = (0..d)
                    .map(|i| {
                        spec.w_ag[i][actions[k]] as f64
                            + spec.w_rg[i] as f64 * r_prevs[k]
                            + spec.b_g[i] as f64
                    })
                    .collect();
                let contrib = matvec(&powers[t - 2 - k], &u);
                for i in 0..d {
                    acc[i] += contrib[i];
                }
            }
            acc
        };
        let r: f64 = spec.w_gr.iter().zip(&gt).map(|(&w, &x)| w as f64 * x).sum::<f64>()
            + spec.w_ar[actions[t - 1]] as f64
            + spec.b_r as f64;
        r_prevs.push(r);

        let mut want = matvec(&powers[t], &g0_64);
        for k in 0..t {
            let u: Vec<f64> = (0..d)
                .map(|i| {
                    spec.w_ag[i][actions[k]] as f64
                        + spec.w_rg[i] as f64 * r_prevs[k]
                        + spec.b_g[i] as f64
                })
                .collect();
            let contrib = matvec(&powers[t - 1 - k], &u);
            for i in 0..d {
                want[i] += contrib[i];
            }
        }
        for i in 0..d {
            let got = iter_states[t][i] as f64;
            assert!(
                (got - want[i]).abs() <= 1e-3,
                "state[{t}][{i}]: iterative {got} vs closed form {}",
                want[i]
            );
        }
        assert!(
            (iter_rewards[t - 1] as f64 - r).abs() <= 1e-3,
            "reward[{}]: iterative {} vs closed form {r}",
            t - 1,
            iter_rewards[t - 1]
        );
    }
}

#[test]
fn masked_sink_dimension_has_exactly_zero_influence() {
    // Perturbing the sink latent changes nothing downstream bit for bit:
    // its outgoing masks are all zero, so every product term it touches is
    // exactly 0.0 either way.
    let spec = make_latent_mdp(&linear_cfg(5, 0.1), 21).unwrap();
    let sink = spec.dims - 1;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let g = spec.init_state(&mut rng);
    let mut g_pert = g.clone();
    g_pert[sink] += 1000.0;

    for a in 0..spec.action_count {
        let mut r1 = ChaCha8Rng::seed_from_u64(33);
        let mut r2 = ChaCha8Rng::seed_from_u64(33);
        let (gn1, o1, rw1) = step_latent(&spec, &g, a, 0.25, &mut r1).unwrap();
        let (gn2, o2, rw2) = step_latent(&spec, &g_pert, a, 0.25, &mut r2).unwrap();
        assert_eq!(rw1.to_bits(), rw2.to_bits(), "reward depends on the sink dim");
        for i in 0..spec.dims {
            assert_eq!(gn1[i].to_bits(), gn2[i].to_bits(), "latent {i} depends on the sink dim");
        }
        for k in 0..spec.obs_dim {
            assert_eq!(o1[k].to_bits(), o2[k].to_bits(), "obs {k} depends on the sink dim");
        }
    }
}

#[test]
fn noise_scale_does_not_desync_the_random_stream() {
    // Noise draws happen even at scale zero, so the action sequence of a
    // random rollout is identical across noise settings for the same seed.
    let quiet = make_latent_mdp(&linear_cfg(4, 0.0), 11).unwrap();
    let noisy = LatentMDPSpec { noise_g: 0.3, noise_obs: 0.3, noise_r: 0.3, ..quiet.clone() };
    let a = rollout_latent_random(&quiet, 30, 77).unwrap();
    let b = rollout_latent_random(&noisy, 30, 77).unwrap();
    assert_eq!(a.actions, b.actions);
    assert_ne!(a.rewards, b.rewards, "noise should move the rewards");
}

#[test]
fn latent_step_rejects_bad_inputs() {
    let spec = make_latent_mdp(&linear_cfg(4, 0.1), 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let g = vec![0.0; 3];
    assert!(matches!(step_latent(&spec, &g, 0, 0.0, &mut rng), Err(Error::Dim { .. })));
    let g = vec![0.0; 4];
    let err = step_latent(&spec, &g, 99, 0.0, &mut rng).unwrap_err();
    assert!(err.to_string().contains("out of range"));
}

#[test]
fn tanh_mode_bounds_the_state() {
    let cfg = LatentGenConfig { nonlinearity: Nonlinearity::Tanh, ..linear_cfg(4, 0.0) };
    let spec = make_latent_mdp(&cfg, 2).unwrap();
    let roll = rollout_latent_random(&spec, 50, 3).unwrap();
    for s in &roll.states[1..] {
        for &v in s {
            assert!(v.abs() <= 1.0, "tanh state escaped [-1, 1]: {v}");
        }
    }
}

// ── Latent pixel adapter ─────────────────────────────────────────────────────

#[test]
fn latent_env_embeds_observations_in_a_zero_padded_frame() {
    let spec = make_latent_mdp(&linear_cfg(4, 0.1), 8).unwrap();
    let side = spec.frame_side;
    let obs_dim = spec.obs_dim;
    let mut env = LatentEnv::new(spec).unwrap();
    let frame = env.reset(123);
    assert_eq!(frame.len(), side * side);
    assert!(frame[obs_dim..].iter().all(|&v| v == 0.0), "padding must stay zero");
    let (frame2, _r) = env.step(1).unwrap();
    assert!(frame2[obs_dim..].iter().all(|&v| v == 0.0));

    // Resets are reproducible per seed.
    let f1 = env.reset(55);
    let f2 = env.reset(55);
    assert_eq!(f1, f2);
}

// ── Gridworld ────────────────────────────────────────────────────────────────

#[test]
fn render_geometry_matches_the_spec() {
    let paper = GridWorldSpec::paper();
    assert_eq!((paper.frame_h(), paper.frame_w()), (84, 84));
    let desk = GridWorldSpec::desk();
    assert_eq!((desk.frame_h(), desk.frame_w()), (24, 32));

    let state = GridWorldState::reset(&paper);
    let frame = gridworld::render(&paper, &state, 0);
    assert_eq!(frame.len(), 84 * 84);
    // Exactly one cell of each intensity: agent, key, door.
    let px = paper.cell_px * paper.cell_px;
    for (v, n) in [(gridworld::AGENT, px), (gridworld::KEY, px), (gridworld::DOOR, px)] {
        let count = frame.iter().filter(|&&x| x == v).count();
        assert_eq!(count, n, "expected {n} pixels at intensity {v}");
    }
}

#[test]
fn distractor_band_is_the_only_region_that_changes_between_steps() {
    let spec = GridWorldSpec::desk();
    let mut s1 = GridWorldState::reset(&spec);
    let mut s2 = GridWorldState::reset(&spec);
    s2.step = 1; // same layout, later step: only the noise band may differ
    let f1 = gridworld::render(&spec, &s1, 7);
    let f2 = gridworld::render(&spec, &s2, 7);
    let band = gridworld::distractor_band(&spec).unwrap();
    let w = spec.frame_w();
    let mut changed_outside = 0;
    let mut changed_inside = 0;
    for r in 0..spec.frame_h() {
        for c in 0..w {
            if f1[r * w + c] != f2[r * w + c] {
                if c >= band {
                    changed_inside += 1;
                } else {
                    changed_outside += 1;
                }
            }
        }
    }
    assert_eq!(changed_outside, 0, "pixels outside the distractor band changed");
    assert!(changed_inside > 0, "distractor band never changed");

    // Same step and seed: bit-identical frames.
    s1.step = 1;
    let f3 = gridworld::render(&spec, &s1, 7);
    assert_eq!(f2, f3);
}

#[test]
fn key_pixels_disappear_after_pickup() {
    let spec = GridWorldSpec::paper();
    let mut state = GridWorldState::reset(&spec);
    state.agent = spec.key_pos;
    state.has_key = true;
    let frame = gridworld::render(&spec, &state, 0);
    assert_eq!(frame.iter().filter(|&&x| x == gridworld::KEY).count(), 0);
}

#[test]
fn scripted_path_collects_the_key_then_the_reward_once() {
    let spec = GridWorldSpec::desk();
    let plan = gridworld::scripted_optimal(&spec).expect("desk layout should be solvable");
    let mut state = GridWorldState::reset(&spec);
    let mut total = 0.0;
    let mut reward_step = None;
    for (t, &a) in plan.iter().enumerate() {
        let r = gridworld::step_gridworld(&spec, &mut state, a).unwrap();
        total += r;
        if r > 0.0 {
            reward_step = Some(t);
        }
    }
    assert_eq!(total, 1.0);
    assert_eq!(reward_step, Some(plan.len() - 1), "reward must land on the final step");
    assert!(state.has_key);

    // Leaving and re-entering the door pays nothing the second time.
    let r = gridworld::step_gridworld(&spec, &mut state, gridworld::UP).unwrap();
    assert_eq!(r, 0.0);
    let r = gridworld::step_gridworld(&spec, &mut state, gridworld::DOWN).unwrap();
    assert_eq!(r, 0.0, "door reward must be paid at most once");
}

#[test]
fn door_without_key_pays_nothing() {
    let spec = GridWorldSpec::desk();
    let mut state = GridWorldState::reset(&spec);
    state.agent = (spec.door_pos.0.saturating_sub(1), spec.door_pos.1);
    let r = gridworld::step_gridworld(&spec, &mut state, gridworld::DOWN).unwrap();
    assert_eq!(state.agent, spec.door_pos);
    assert_eq!(r, 0.0);
    assert!(!state.reward_given);
}

#[test]
fn moves_clamp_at_the_walls() {
    let spec = GridWorldSpec::desk();
    let mut state = GridWorldState::reset(&spec);
    state.agent = (0, 0);
    gridworld::step_gridworld(&spec, &mut state, gridworld::UP).unwrap();
    assert_eq!(state.agent, (0, 0));
    gridworld::step_gridworld(&spec, &mut state, gridworld::LEFT).unwrap();
    assert_eq!(state.agent, (0, 0));
    let err = gridworld::step_gridworld(&spec, &mut state, 9).unwrap_err();
    assert!(err.to_string().contains("out of range"));
}

#[test]
fn layout_randomization_keeps_cells_distinct() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let mut spec = GridWorldSpec::desk();
        spec.randomize_layout(&mut rng).unwrap();
        spec.validate().unwrap();
    }
}

// ── Rollouts ─────────────────────────────────────────────────────────────────

#[test]
fn rollouts_are_fixed_length_and_reproducible() {
    let mut env = GridWorldEnv::new(GridWorldSpec::desk()).unwrap();
    let a = rollout(&mut env, &Policy::Random, 3).unwrap();
    let b = rollout(&mut env, &Policy::Random, 3).unwrap();
    let c = rollout(&mut env, &Policy::Random, 4).unwrap();
    assert_eq!(a.len(), env.horizon());
    assert_eq!(a.frames.len(), (env.horizon() + 1) * env.frame_h() * env.frame_w());
    assert_eq!(a, b, "same seed must reproduce the episode");
    assert_ne!(a.actions, c.actions, "different seeds should explore differently");
    assert!(a.actions.iter().all(|&x| x != START_ACTION));
    assert_eq!(a.meta.env_id, "keydoor");
    assert_eq!(a.meta.policy, "random");
}

#[test]
fn scripted_rollout_reaches_the_goal() {
    let spec = GridWorldSpec::desk();
    let plan = gridworld::scripted_optimal(&spec).unwrap();
    let mut env = GridWorldEnv::new(spec).unwrap();
    let tr = rollout(&mut env, &Policy::Scripted(plan.clone()), 0).unwrap();
    let total: Real = tr.rewards.iter().sum();
    assert_eq!(total, 1.0);
    assert_eq!(&tr.actions[..plan.len()], &plan[..]);
}

#[test]
fn epsilon_zero_matches_the_script() {
    let spec = GridWorldSpec::desk();
    let plan = gridworld::scripted_optimal(&spec).unwrap();
    let mut env = GridWorldEnv::new(spec).unwrap();
    let pure = rollout(&mut env, &Policy::Scripted(plan.clone()), 5).unwrap();
    let mixed =
        rollout(&mut env, &Policy::EpsilonScripted { actions: plan, eps: 0.0 }, 5).unwrap();
    assert_eq!(pure.actions, mixed.actions);
    assert_eq!(mixed.meta.policy, "eps-scripted");
}

#[test]
fn rollout_many_uses_consecutive_seeds() {
    let mut env = GridWorldEnv::new(GridWorldSpec::desk()).unwrap();
    let batch = rollout_many(&mut env, &Policy::Random, 10, 3).unwrap();
    assert_eq!(batch.len(), 3);
    assert_eq!(batch[0].meta.seed, 10);
    assert_eq!(batch[2].meta.seed, 12);
    let single = rollout(&mut env, &Policy::Random, 11).unwrap();
    assert_eq!(batch[1], single);
}
