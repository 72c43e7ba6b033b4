//! Numerics contract tests: frozen values for the primitive kernels, a
//! central-difference oracle for every differentiable primitive, and the
//! optimizer's step semantics.

use adacred_core::numerics::{
    adam_step, gradcheck, lr_at, AdamConfig, AdamState, ParamRef, Real, Tape,
};
use adacred_core::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[cfg(not(feature = "real64"))]
const TOL: Real = 1e-2;
#[cfg(feature = "real64")]
const TOL: Real = 1e-3;

const FD_EPS: Real = 1e-3;

fn randn(n: usize, seed: u64) -> Vec<Real> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.sample::<Real, _>(rand_distr::StandardNormal)).collect()
}

/// Gradient-check a scalar-valued tape program against central differences.
/// `build` must construct the program from leaf values and return the loss id.
fn check_grad(
    leaf: &[Real],
    shape: &[usize],
    build: impl Fn(&mut Tape, adacred_core::numerics::TensorId) -> adacred_core::numerics::TensorId,
) {
    let f = |x: &[Real]| -> Real {
        let mut tape = Tape::new();
        let id = tape.leaf(x.to_vec(), shape.to_vec()).unwrap();
        let loss = build(&mut tape, id);
        tape.data(loss)[0]
    };
    let numeric = gradcheck::central_difference(f, leaf, FD_EPS);

    let mut tape = Tape::new();
    let id = tape.leaf(leaf.to_vec(), shape.to_vec()).unwrap();
    let loss = build(&mut tape, id);
    tape.backward(loss).unwrap();
    let analytic = tape.grad(id).unwrap();
    let err = gradcheck::max_rel_err(analytic, &numeric);
    assert!(err < TOL, "max rel err {err} exceeds {TOL}");
}

/// Scalarize a tensor with fixed pseudo-random weights so FD sees every entry.
fn weighted_sum(tape: &mut Tape, x: adacred_core::numerics::TensorId) -> adacred_core::numerics::TensorId {
    let n = tape.data(x).len();
    let w = tape.constant(randn(n, 999), tape.shape(x).to_vec()).unwrap();
    let prod = tape.mul(x, w).unwrap();
    tape.sum(prod).unwrap()
}

// ── Kernel values ────────────────────────────────────────────────────────────

#[test]
fn matmul_known_product() {
    let mut tape = Tape::new();
    let a = tape.constant(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], vec![2, 3]).unwrap();
    let b = tape.constant(vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0], vec![3, 2]).unwrap();
    let c = tape.matmul(a, b).unwrap();
    assert_eq!(tape.data(c), &[58.0, 64.0, 139.0, 154.0]);
    assert_eq!(tape.shape(c), &[2, 2]);
}

#[test]
fn matmul_shape_mismatch_is_dimension_error() {
    let mut tape = Tape::new();
    let a = tape.constant(vec![0.0; 6], vec![2, 3]).unwrap();
    let b = tape.constant(vec![0.0; 6], vec![2, 3]).unwrap();
    match tape.matmul(a, b) {
        Err(Error::Dim { op, .. }) => assert_eq!(op, "matmul"),
        other => panic!("expected dimension error, got {other:?}"),
    }
}

#[test]
fn matmul_inputs_are_not_mutated() {
    let mut tape = Tape::new();
    let data = vec![1.0, 2.0, 3.0, 4.0];
    let a = tape.constant(data.clone(), vec![2, 2]).unwrap();
    let b = tape.constant(data.clone(), vec![2, 2]).unwrap();
    tape.matmul(a, b).unwrap();
    assert_eq!(tape.data(a), &data[..]);
    assert_eq!(tape.data(b), &data[..]);
}

#[test]
fn bmm_matches_per_slice_matmul() {
    let a = randn(2 * 3 * 4, 1);
    let b = randn(2 * 4 * 2, 2);
    let mut tape = Tape::new();
    let ta = tape.constant(a.clone(), vec![2, 3, 4]).unwrap();
    let tb = tape.constant(b.clone(), vec![2, 4, 2]).unwrap();
    let out = tape.bmm(ta, tb).unwrap();
    for g in 0..2 {
        let mut t2 = Tape::new();
        let sa = t2.constant(a[g * 12..(g + 1) * 12].to_vec(), vec![3, 4]).unwrap();
        let sb = t2.constant(b[g * 8..(g + 1) * 8].to_vec(), vec![4, 2]).unwrap();
        let so = t2.matmul(sa, sb).unwrap();
        assert_eq!(&tape.data(out)[g * 6..(g + 1) * 6], t2.data(so));
    }
}

#[test]
fn softmax_rows_sum_to_one_and_uniform_inputs_stay_uniform() {
    let mut tape = Tape::new();
    let x = tape.constant(randn(4 * 5, 3), vec![4, 5]).unwrap();
    let s = tape.softmax(x, 1).unwrap();
    for row in tape.data(s).chunks(5) {
        let total: Real = row.iter().sum();
        assert!((total - 1.0).abs() < 1e-5, "row sums to {total}");
    }
    let u = tape.constant(vec![2.5; 6], vec![2, 3]).unwrap();
    let su = tape.softmax(u, 1).unwrap();
    for v in tape.data(su) {
        assert!((v - 1.0 / 3.0).abs() < 1e-6);
    }
}

#[test]
fn layer_norm_rows_have_zero_mean_unit_variance() {
    let mut tape = Tape::new();
    let x = tape.constant(randn(3 * 8, 4), vec![3, 8]).unwrap();
    let gain = tape.constant(vec![1.0; 8], vec![8]).unwrap();
    let bias = tape.constant(vec![0.0; 8], vec![8]).unwrap();
    let y = tape.layer_norm(x, gain, bias, 1e-5).unwrap();
    for row in tape.data(y).chunks(8) {
        let mean: Real = row.iter().sum::<Real>() / 8.0;
        let var: Real = row.iter().map(|v| (v - mean) * (v - mean)).sum::<Real>() / 8.0;
        assert!(mean.abs() < 1e-5, "row mean {mean}");
        assert!((var - 1.0).abs() < 1e-3, "row variance {var}");
    }
}

#[test]
fn conv2d_identity_and_stride_cases() {
    // 1x1 kernel [[2]] on a 3x3 ones image doubles every pixel.
    let mut tape = Tape::new();
    let x = tape.constant(vec![1.0; 9], vec![1, 1, 3, 3]).unwrap();
    let w = tape.constant(vec![2.0], vec![1, 1, 1, 1]).unwrap();
    let b = tape.constant(vec![0.0], vec![1]).unwrap();
    let y = tape.conv2d(x, w, b, 1).unwrap();
    assert_eq!(tape.data(y), &[2.0; 9]);

    // 2x2 ones kernel, stride 2, on a 4x4 ones image: each output is a block sum.
    let x = tape.constant(vec![1.0; 16], vec![1, 1, 4, 4]).unwrap();
    let w = tape.constant(vec![1.0; 4], vec![1, 1, 2, 2]).unwrap();
    let y = tape.conv2d(x, w, b, 2).unwrap();
    assert_eq!(tape.shape(y), &[1, 1, 2, 2]);
    assert_eq!(tape.data(y), &[4.0; 4]);
}

#[test]
fn conv2d_kernel_larger_than_image_is_dimension_error() {
    let mut tape = Tape::new();
    let x = tape.constant(vec![1.0; 4], vec![1, 1, 2, 2]).unwrap();
    let w = tape.constant(vec![1.0; 9], vec![1, 1, 3, 3]).unwrap();
    let b = tape.constant(vec![0.0], vec![1]).unwrap();
    assert!(matches!(tape.conv2d(x, w, b, 1), Err(Error::Dim { op: "conv2d", .. })));
}

#[test]
fn gelu_matches_tanh_approximation_values() {
    let mut tape = Tape::new();
    let x = tape.constant(vec![0.0, 1.0, -1.0], vec![3]).unwrap();
    let y = tape.gelu(x).unwrap();
    assert_eq!(tape.data(y)[0], 0.0);
    assert!((tape.data(y)[1] - 0.841192).abs() < 2e-5);
    assert!((tape.data(y)[2] - (-0.158808)).abs() < 2e-5);
}

#[test]
fn masked_cross_entropy_uniform_logits_give_log_k() {
    let mut tape = Tape::new();
    let logits = tape.constant(vec![0.0; 3 * 4], vec![3, 4]).unwrap();
    let loss = tape.masked_cross_entropy(logits, &[0, 1, 2], &[true, false, true]).unwrap();
    assert!((tape.data(loss)[0] - (4.0 as Real).ln()).abs() < 1e-6);
}

#[test]
fn masked_cross_entropy_fully_padded_is_contract_error() {
    let mut tape = Tape::new();
    let logits = tape.constant(vec![0.0; 4], vec![2, 2]).unwrap();
    assert!(matches!(
        tape.masked_cross_entropy(logits, &[0, 1], &[false, false]),
        Err(Error::Contract(_))
    ));
}

#[test]
fn embedding_gathers_rows() {
    let mut tape = Tape::new();
    let table = tape.constant(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], vec![3, 2]).unwrap();
    let out = tape.embed(table, &[2, 0, 2]).unwrap();
    assert_eq!(tape.data(out), &[5.0, 6.0, 1.0, 2.0, 5.0, 6.0]);
    assert!(matches!(tape.embed(table, &[3]), Err(Error::Parameter(_))));
}

#[test]
fn interleave_and_take_every_are_inverse() {
    let mut tape = Tape::new();
    let a = tape.constant(randn(2 * 3 * 4, 7), vec![2, 3, 4]).unwrap();
    let b = tape.constant(randn(2 * 3 * 4, 8), vec![2, 3, 4]).unwrap();
    let y = tape.interleave(a, b).unwrap();
    assert_eq!(tape.shape(y), &[2, 6, 4]);
    let even = tape.take_every(y, 0, 2).unwrap();
    let odd = tape.take_every(y, 1, 2).unwrap();
    assert_eq!(tape.data(even), tape.data(a));
    assert_eq!(tape.data(odd), tape.data(b));
}

#[test]
fn concat_tokens_stitches_parts_and_routes_gradients() {
    let mut tape = Tape::new();
    let a = tape.leaf(vec![1.0, 2.0, 3.0, 4.0], vec![2, 1, 2]).unwrap();
    let b = tape.leaf(vec![5.0, 6.0, 7.0, 8.0, 9.0, 10.0, 11.0, 12.0], vec![2, 2, 2]).unwrap();
    let y = tape.concat_tokens(&[a, b]).unwrap();
    assert_eq!(tape.shape(y), &[2, 3, 2]);
    assert_eq!(
        tape.data(y),
        &[1.0, 2.0, 5.0, 6.0, 7.0, 8.0, 3.0, 4.0, 9.0, 10.0, 11.0, 12.0]
    );
    let loss = weighted_sum(&mut tape, y);
    tape.backward(loss).unwrap();
    // Every source entry reaches the output exactly once.
    assert!(tape.grad(a).unwrap().iter().all(|&g| g != 0.0));
    assert!(tape.grad(b).unwrap().iter().all(|&g| g != 0.0));

    let bad = tape.leaf(vec![0.0; 6], vec![3, 1, 2]).unwrap();
    assert!(tape.concat_tokens(&[a, bad]).is_err());
}

#[test]
fn concat_tokens_gradient_matches_central_difference() {
    check_grad(&randn(2 * 2 * 3, 31), &[2, 2, 3], |tape, x| {
        let other = tape.constant(randn(2 * 1 * 3, 32), vec![2, 1, 3]).unwrap();
        let y = tape.concat_tokens(&[other, x]).unwrap();
        let z = tape.gelu(y).unwrap();
        weighted_sum(tape, z)
    });
}

#[test]
fn force_ones_prefix_overwrites_and_blocks_gradients() {
    let mut tape = Tape::new();
    let x = tape.leaf(vec![0.2, 0.3, 0.4, 0.5, 0.6, 0.7], vec![2, 3]).unwrap();
    let y = tape.force_ones_prefix(x, 2).unwrap();
    assert_eq!(tape.data(y), &[1.0, 1.0, 0.4, 1.0, 1.0, 0.7]);
    let loss = tape.sum(y).unwrap();
    tape.backward(loss).unwrap();
    assert_eq!(tape.grad(x).unwrap(), &[0.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
}

// ── Straight-through gate ────────────────────────────────────────────────────

#[test]
fn gumbel_gate_is_exactly_binary_with_nonzero_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut tape = Tape::new();
    let scores: Vec<Real> = (0..64).map(|i| 0.05 + 0.9 * (i as Real) / 63.0).collect();
    let s = tape.leaf(scores, vec![64]).unwrap();
    let gate = tape.gumbel_st(s, 1.0, &mut rng).unwrap();
    let vals = tape.data(gate).to_vec();
    assert!(vals.iter().all(|v| *v == 0.0 || *v == 1.0));
    assert!(vals.contains(&0.0) && vals.contains(&1.0), "want both kept and dropped");
    let loss = weighted_sum(&mut tape, gate);
    tape.backward(loss).unwrap();
    let grads = tape.grad(s).unwrap();
    for (i, v) in vals.iter().enumerate() {
        assert!(grads[i].abs() > 0.0, "zero gradient for entry {i} with forward {v}");
    }
}

#[test]
fn gumbel_gate_is_deterministic_per_seed() {
    let draw = |seed: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tape = Tape::new();
        let s = tape.constant(vec![0.5; 32], vec![32]).unwrap();
        let gate = tape.gumbel_st(s, 1.0, &mut rng).unwrap();
        tape.data(gate).to_vec()
    };
    assert_eq!(draw(5), draw(5));
    assert_ne!(draw(5), draw(6));
}

#[test]
fn hard_threshold_keeps_at_exactly_half() {
    let mut tape = Tape::new();
    let s = tape.constant(vec![0.49, 0.5, 0.51], vec![3]).unwrap();
    let gate = tape.hard_threshold(s).unwrap();
    assert_eq!(tape.data(gate), &[0.0, 1.0, 1.0]);
}

// ── Gradient oracles ─────────────────────────────────────────────────────────

#[test]
fn matmul_gradient_matches_central_difference() {
    let b_data = randn(3 * 2, 21);
    check_grad(&randn(2 * 3, 20), &[2, 3], |tape, x| {
        let b = tape.constant(b_data.clone(), vec![3, 2]).unwrap();
        let y = tape.matmul(x, b).unwrap();
        weighted_sum(tape, y)
    });
}

#[test]
fn bmm_gradient_matches_central_difference() {
    let b_data = randn(2 * 3 * 2, 23);
    check_grad(&randn(2 * 2 * 3, 22), &[2, 2, 3], |tape, x| {
        let b = tape.constant(b_data.clone(), vec![2, 3, 2]).unwrap();
        let y = tape.bmm(x, b).unwrap();
        weighted_sum(tape, y)
    });
}

#[test]
fn softmax_gradient_matches_central_difference() {
    check_grad(&randn(3 * 4, 24), &[3, 4], |tape, x| {
        let y = tape.softmax(x, 1).unwrap();
        weighted_sum(tape, y)
    });
}

#[test]
fn layer_norm_gradient_matches_central_difference() {
    let n = 2 * 6;
    check_grad(&randn(n, 25), &[2, 6], |tape, x| {
        let gain = tape.constant(vec![1.2; 6], vec![6]).unwrap();
        let bias = tape.constant(vec![-0.3; 6], vec![6]).unwrap();
        let y = tape.layer_norm(x, gain, bias, 1e-5).unwrap();
        weighted_sum(tape, y)
    });
    // Gain/bias side.
    let x_data = randn(n, 26);
    check_grad(&randn(6, 27), &[6], |tape, g| {
        let x = tape.constant(x_data.clone(), vec![2, 6]).unwrap();
        let bias = tape.constant(vec![0.1; 6], vec![6]).unwrap();
        let y = tape.layer_norm(x, g, bias, 1e-5).unwrap();
        weighted_sum(tape, y)
    });
}

#[test]
fn conv2d_gradient_matches_central_difference() {
    let w_data = randn(2 * 1 * 2 * 2, 31);
    check_grad(&randn(1 * 1 * 4 * 4, 30), &[1, 1, 4, 4], |tape, x| {
        let w = tape.constant(w_data.clone(), vec![2, 1, 2, 2]).unwrap();
        let b = tape.constant(vec![0.1, -0.2], vec![2]).unwrap();
        let y = tape.conv2d(x, w, b, 2).unwrap();
        weighted_sum(tape, y)
    });
    let x_data = randn(1 * 1 * 4 * 4, 32);
    check_grad(&randn(2 * 1 * 2 * 2, 33), &[2, 1, 2, 2], |tape, w| {
        let x = tape.constant(x_data.clone(), vec![1, 1, 4, 4]).unwrap();
        let b = tape.constant(vec![0.0, 0.0], vec![2]).unwrap();
        let y = tape.conv2d(x, w, b, 1).unwrap();
        weighted_sum(tape, y)
    });
}

#[test]
fn pointwise_gradients_match_central_difference() {
    for seed in [40, 41] {
        check_grad(&randn(10, seed), &[10], |tape, x| {
            let y = tape.gelu(x).unwrap();
            weighted_sum(tape, y)
        });
        check_grad(&randn(10, seed + 2), &[10], |tape, x| {
            let y = tape.sigmoid(x).unwrap();
            weighted_sum(tape, y)
        });
        check_grad(&randn(10, seed + 4), &[10], |tape, x| {
            let y = tape.tanh(x).unwrap();
            weighted_sum(tape, y)
        });
    }
}

#[test]
fn broadcast_and_row_scale_gradients_match_central_difference() {
    let a_data = randn(3 * 4, 50);
    // Bias-style broadcast on the last axis.
    check_grad(&randn(4, 51), &[4], |tape, bias| {
        let a = tape.constant(a_data.clone(), vec![3, 4]).unwrap();
        let y = tape.add(a, bias).unwrap();
        let z = tape.mul(y, y).unwrap();
        tape.sum(z).unwrap()
    });
    // Row scaling.
    check_grad(&randn(3, 52), &[3], |tape, m| {
        let a = tape.constant(a_data.clone(), vec![3, 4]).unwrap();
        let y = tape.row_scale(a, m).unwrap();
        weighted_sum(tape, y)
    });
    check_grad(&randn(3 * 4, 53), &[3, 4], |tape, x| {
        let m = tape.constant(vec![0.5, -1.5, 2.0], vec![3]).unwrap();
        let y = tape.row_scale(x, m).unwrap();
        weighted_sum(tape, y)
    });
}

#[test]
fn masked_cross_entropy_gradient_matches_central_difference() {
    check_grad(&randn(4 * 3, 60), &[4, 3], |tape, logits| {
        tape.masked_cross_entropy(logits, &[0, 2, 1, 0], &[true, true, false, true]).unwrap()
    });
}

#[test]
fn composite_chain_gradient_matches_central_difference() {
    // matmul -> layer_norm -> gelu -> reshape/permute -> softmax -> ce.
    let w_data = randn(5 * 4, 71);
    check_grad(&randn(3 * 5, 70), &[3, 5], |tape, x| {
        let w = tape.constant(w_data.clone(), vec![5, 4]).unwrap();
        let h = tape.matmul(x, w).unwrap();
        let gain = tape.constant(vec![1.0; 4], vec![4]).unwrap();
        let bias = tape.constant(vec![0.0; 4], vec![4]).unwrap();
        let n = tape.layer_norm(h, gain, bias, 1e-5).unwrap();
        let g = tape.gelu(n).unwrap();
        tape.masked_cross_entropy(g, &[1, 3, 0], &[true, true, true]).unwrap()
    });
}

#[test]
fn backward_rejects_non_scalar_loss() {
    let mut tape = Tape::new();
    let x = tape.leaf(vec![1.0, 2.0], vec![2]).unwrap();
    assert!(matches!(tape.backward(x), Err(Error::Contract(_))));
}

#[test]
fn unused_leaf_receives_zero_gradient() {
    let mut tape = Tape::new();
    let used = tape.leaf(vec![1.0, 2.0], vec![2]).unwrap();
    let unused = tape.leaf(vec![3.0, 4.0], vec![2]).unwrap();
    let loss = tape.sum(used).unwrap();
    tape.backward(loss).unwrap();
    assert_eq!(tape.grad(unused).unwrap(), &[0.0, 0.0]);
}

// ── Optimizer ────────────────────────────────────────────────────────────────

#[test]
fn adam_zero_gradient_zero_decay_leaves_params_unchanged() {
    let cfg = AdamConfig { weight_decay: 0.0, ..AdamConfig::default() };
    let mut state = AdamState::new(&[3]);
    let mut p = vec![1.0, -2.0, 3.0];
    let before = p.clone();
    adam_step(
        &cfg,
        &mut state,
        &mut [ParamRef { data: &mut p, decay: true }],
        &[vec![0.0; 3]],
        100,
    )
    .unwrap();
    assert_eq!(p, before);
}

#[test]
fn adam_clips_by_global_norm_before_moments() {
    let cfg = AdamConfig { clip_norm: 1.0, weight_decay: 0.0, ..AdamConfig::default() };
    // Gradient with global norm 10 must behave exactly like the pre-scaled
    // gradient with clipping disabled.
    let g = vec![6.0, 8.0]; // norm 10
    let g_scaled: Vec<Real> = g.iter().map(|v| v * 0.1).collect();

    let mut p1 = vec![0.5, -0.5];
    let mut s1 = AdamState::new(&[2]);
    let stats =
        adam_step(&cfg, &mut s1, &mut [ParamRef { data: &mut p1, decay: false }], &[g], 10).unwrap();
    assert!(stats.clipped && (stats.grad_norm - 10.0).abs() < 1e-4);

    let cfg_noclip = AdamConfig { clip_norm: 1e30, ..cfg };
    let mut p2 = vec![0.5, -0.5];
    let mut s2 = AdamState::new(&[2]);
    adam_step(&cfg_noclip, &mut s2, &mut [ParamRef { data: &mut p2, decay: false }], &[g_scaled], 10)
        .unwrap();
    assert_eq!(p1, p2);
}

#[test]
fn adam_refuses_non_finite_gradients_without_state_change() {
    let cfg = AdamConfig::default();
    let mut state = AdamState::new(&[2]);
    let mut p = vec![1.0, 2.0];
    let before = p.clone();
    let err = adam_step(
        &cfg,
        &mut state,
        &mut [ParamRef { data: &mut p, decay: true }],
        &[vec![1.0, Real::NAN]],
        10,
    );
    assert!(matches!(err, Err(Error::Numerical(_))));
    assert_eq!(p, before);
    assert_eq!(state.step, 0);
    assert_eq!(state.tokens, 0);
}

#[test]
fn lr_schedule_warms_up_then_decays_to_floor() {
    let cfg = AdamConfig {
        lr_peak: 6e-4,
        warmup_tokens: 10240,
        final_tokens: 100_000,
        lr_floor_frac: 0.1,
        ..AdamConfig::default()
    };
    // Linear warmup: lr = peak * tokens / warmup.
    assert!((lr_at(&cfg, 512) - 6e-4 * 512.0 / 10240.0).abs() < 1e-12);
    assert!((lr_at(&cfg, 10240) - 6e-4).abs() < 1e-9);
    // Cosine midpoint and floor.
    let mid = lr_at(&cfg, (10240 + 100_000) / 2);
    let expect_mid = 6e-5 + (6e-4 - 6e-5) * 0.5;
    assert!((mid - expect_mid).abs() < 1e-6);
    assert!((lr_at(&cfg, 100_000) - 6e-5).abs() < 1e-9);
    assert!((lr_at(&cfg, 10_000_000) - 6e-5).abs() < 1e-9);
}

#[test]
fn adam_warmup_lr_follows_token_count() {
    let cfg = AdamConfig { warmup_tokens: 10240, weight_decay: 0.0, ..AdamConfig::default() };
    let mut state = AdamState::new(&[1]);
    let mut p = vec![0.0];
    let stats = adam_step(
        &cfg,
        &mut state,
        &mut [ParamRef { data: &mut p, decay: false }],
        &[vec![1.0]],
        512,
    )
    .unwrap();
    assert!((stats.lr - cfg.lr_peak * 512.0 / 10240.0).abs() < 1e-10);
}

// ── Property tests ───────────────────────────────────────────────────────────

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_always_sums_to_one(rows in 1usize..4, cols in 1usize..6, seed in 0u64..500) {
        let mut tape = Tape::new();
        let x = tape.constant(randn(rows * cols, seed), vec![rows, cols]).unwrap();
        let s = tape.softmax(x, 1).unwrap();
        for row in tape.data(s).chunks(cols) {
            let total: Real = row.iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn permute_roundtrip_restores_data(seed in 0u64..500) {
        let mut tape = Tape::new();
        let x = tape.constant(randn(2 * 3 * 4, seed), vec![2, 3, 4]).unwrap();
        let p = tape.permute(x, &[2, 0, 1]).unwrap();
        let back = tape.permute(p, &[1, 2, 0]).unwrap();
        prop_assert_eq!(tape.data(back), tape.data(x));
    }

    #[test]
    fn gumbel_gate_outputs_stay_binary(seed in 0u64..500, tau in 0.25f64..4.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tape = Tape::new();
        let s = tape.constant(randn(16, seed).iter().map(|v| v.abs().min(0.99).max(0.01)).collect(), vec![16]).unwrap();
        let gate = tape.gumbel_st(s, tau as Real, &mut rng).unwrap();
        prop_assert!(tape.data(gate).iter().all(|v| *v == 0.0 || *v == 1.0));
    }
}
