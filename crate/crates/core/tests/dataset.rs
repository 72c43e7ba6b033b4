//! Dataset and container tests: return-to-go against a quadratic oracle,
//! binary round-trips (both endiannesses), corruption diagnostics with byte
//! offsets, and the sampling distribution of context windows.

use adacred_core::dataset::{
    compute_return_to_go, OfflineDataset, SequenceBatch, Trajectory, TrajectoryMeta, START_ACTION,
};
use adacred_core::numerics::Real;
use adacred_core::Error;
use proptest::prelude::*;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn mk_traj(t: usize, h: usize, w: usize, seed: u64) -> Trajectory {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frames: Vec<Real> = (0..(t + 1) * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let actions: Vec<u16> = (0..t).map(|_| rng.gen_range(0..4)).collect();
    let rewards: Vec<Real> = (0..t).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Trajectory::new(
        frames,
        h,
        w,
        actions,
        rewards,
        TrajectoryMeta { env_id: "test".into(), seed, policy: "random".into() },
    )
    .unwrap()
}

/// Frames pass through an f32 file format, so compare with a small tolerance
/// instead of bit equality.
fn assert_traj_close(a: &Trajectory, b: &Trajectory) {
    assert_eq!(a.frame_h, b.frame_h);
    assert_eq!(a.frame_w, b.frame_w);
    assert_eq!(a.actions, b.actions);
    assert_eq!(a.meta, b.meta);
    assert_eq!(a.frames.len(), b.frames.len());
    for (x, y) in a.frames.iter().zip(&b.frames) {
        assert!((x - y).abs() <= 1e-6, "frame value drifted: {x} vs {y}");
    }
    for (x, y) in a.rewards.iter().zip(&b.rewards) {
        assert!((x - y).abs() <= 1e-6, "reward drifted: {x} vs {y}");
    }
}

// ── Return-to-go ─────────────────────────────────────────────────────────────

#[test]
fn return_to_go_matches_quadratic_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let rewards: Vec<Real> = (0..200).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let gamma: Real = 0.97;
    let fast = compute_return_to_go(&rewards, gamma);
    // O(T^2) restatement of the definition, accumulated at f64.
    for t in 0..rewards.len() {
        let mut acc = 0.0f64;
        for u in t..rewards.len() {
            acc += (gamma as f64).powi((u - t) as i32) * rewards[u] as f64;
        }
        let err = (fast[t] as f64 - acc).abs() / acc.abs().max(1.0);
        assert!(err <= 1e-5, "rtg[{t}] = {} vs oracle {acc}", fast[t]);
    }
}

#[test]
fn return_to_go_handles_edge_discounts() {
    let rewards: Vec<Real> = vec![1.0, 2.0, 3.0];
    assert_eq!(compute_return_to_go(&rewards, 1.0), vec![6.0, 5.0, 3.0]);
    assert_eq!(compute_return_to_go(&rewards, 0.0), vec![1.0, 2.0, 3.0]);
    assert!(compute_return_to_go(&[], 0.9).is_empty());
}

// ── Structural validation ────────────────────────────────────────────────────

#[test]
fn trajectory_validation_rejects_inconsistent_lengths() {
    let mut t = mk_traj(5, 2, 2, 0);
    t.rewards.pop();
    assert!(matches!(t.validate(), Err(Error::Parameter(_))));

    let mut t = mk_traj(5, 2, 2, 0);
    t.frames.pop();
    assert!(matches!(t.validate(), Err(Error::Parameter(_))));

    let mut t = mk_traj(5, 2, 2, 0);
    t.actions[2] = START_ACTION;
    let err = t.validate().unwrap_err();
    assert!(err.to_string().contains("sentinel"), "unexpected: {err}");
}

#[test]
fn dataset_rejects_mixed_frame_sizes() {
    let err =
        OfflineDataset::new(vec![mk_traj(4, 2, 2, 0), mk_traj(4, 3, 2, 1)], 0.99, false).unwrap_err();
    assert!(err.to_string().contains("frame sizes"), "unexpected: {err}");
}

#[test]
fn imitation_mode_zeroes_rewards_and_rtg() {
    let ds = OfflineDataset::new(vec![mk_traj(6, 2, 2, 3)], 0.99, true).unwrap();
    assert!(ds.trajectories[0].rewards.iter().all(|&r| r == 0.0));
    assert!(ds.return_to_go(0).iter().all(|&r| r == 0.0));
    assert_eq!(ds.max_return(), 0.0);
}

// ── Container round-trips ────────────────────────────────────────────────────

#[test]
fn round_trip_preserves_structure() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.adcr");
    let ds = OfflineDataset::new(
        vec![mk_traj(6, 3, 4, 0), mk_traj(9, 3, 4, 1), mk_traj(4, 3, 4, 2)],
        0.95,
        false,
    )
    .unwrap();
    ds.write(&path).unwrap();
    let back = OfflineDataset::read(&path).unwrap();

    assert_eq!(back.trajectories.len(), 3);
    for (a, b) in ds.trajectories.iter().zip(&back.trajectories) {
        assert_traj_close(a, b);
    }
    assert!((back.gamma - 0.95).abs() <= 1e-6);
    assert!(!back.imitation_mode);
    assert!((back.obs_mean - ds.obs_mean).abs() <= 1e-6);
    assert!((back.obs_std - ds.obs_std).abs() <= 1e-6);
    for i in 0..3 {
        for (x, y) in ds.return_to_go(i).iter().zip(back.return_to_go(i)) {
            assert!((x - y).abs() <= 1e-5);
        }
    }
}

#[test]
fn big_endian_files_read_back_identically() {
    let dir = tempfile::tempdir().unwrap();
    let le = dir.path().join("le.adcr");
    let be = dir.path().join("be.adcr");
    let ds = OfflineDataset::new(vec![mk_traj(5, 2, 3, 42)], 0.9, false).unwrap();
    ds.write(&le).unwrap();
    ds.write_big_endian(&be).unwrap();

    let bytes_le = std::fs::read(&le).unwrap();
    let bytes_be = std::fs::read(&be).unwrap();
    assert_ne!(bytes_le, bytes_be, "endianness flag must change the byte stream");

    let from_le = OfflineDataset::read(&le).unwrap();
    let from_be = OfflineDataset::read(&be).unwrap();
    assert_traj_close(&from_le.trajectories[0], &from_be.trajectories[0]);
    assert_eq!(from_le.obs_mean, from_be.obs_mean);
}

#[test]
fn imitation_flag_survives_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("imit.adcr");
    let ds = OfflineDataset::new(vec![mk_traj(5, 2, 2, 9)], 0.99, true).unwrap();
    ds.write(&path).unwrap();
    let back = OfflineDataset::read(&path).unwrap();
    assert!(back.imitation_mode);
    assert!(back.trajectories[0].rewards.iter().all(|&r| r == 0.0));
}

// ── Corruption diagnostics ───────────────────────────────────────────────────

fn written_bytes(ds: &OfflineDataset) -> Vec<u8> {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.adcr");
    ds.write(&path).unwrap();
    std::fs::read(&path).unwrap()
}

fn read_bytes(bytes: &[u8]) -> adacred_core::Result<OfflineDataset> {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.adcr");
    std::fs::write(&path, bytes).unwrap();
    OfflineDataset::read(&path)
}

#[test]
fn corrupt_magic_is_rejected_at_offset_zero() {
    let ds = OfflineDataset::new(vec![mk_traj(3, 2, 2, 0)], 0.99, false).unwrap();
    let mut bytes = written_bytes(&ds);
    bytes[0] = b'X';
    match read_bytes(&bytes) {
        Err(Error::Format { offset: 0, detail }) => assert!(detail.contains("magic")),
        other => panic!("expected a format error at offset 0, got {other:?}"),
    }
}

#[test]
fn unsupported_version_is_rejected() {
    let ds = OfflineDataset::new(vec![mk_traj(3, 2, 2, 0)], 0.99, false).unwrap();
    let mut bytes = written_bytes(&ds);
    bytes[4] = 2; // version lives at offsets 4..6
    match read_bytes(&bytes) {
        Err(Error::Format { offset: 4, detail }) => assert!(detail.contains("version")),
        other => panic!("expected a version error at offset 4, got {other:?}"),
    }
}

#[test]
fn unknown_endianness_flag_is_rejected() {
    let ds = OfflineDataset::new(vec![mk_traj(3, 2, 2, 0)], 0.99, false).unwrap();
    let mut bytes = written_bytes(&ds);
    bytes[6] = 7;
    match read_bytes(&bytes) {
        Err(Error::Format { offset: 6, detail }) => assert!(detail.contains("endianness")),
        other => panic!("expected an endianness error at offset 6, got {other:?}"),
    }
}

#[test]
fn truncated_file_reports_read_position() {
    let ds = OfflineDataset::new(vec![mk_traj(3, 2, 2, 0)], 0.99, false).unwrap();
    let bytes = written_bytes(&ds);
    let cut = bytes.len() - 7;
    match read_bytes(&bytes[..cut]) {
        Err(Error::Format { offset, detail }) => {
            assert!(detail.contains("truncated"), "unexpected detail: {detail}");
            assert!(offset <= cut as u64, "offset {offset} beyond truncation point {cut}");
            assert!(offset >= 24, "offset {offset} should point into the record");
        }
        other => panic!("expected a truncation error, got {other:?}"),
    }
}

#[test]
fn checksum_mismatch_names_the_trajectory() {
    let ds = OfflineDataset::new(vec![mk_traj(3, 2, 2, 0), mk_traj(3, 2, 2, 1)], 0.99, false).unwrap();
    let mut bytes = written_bytes(&ds);
    // Flip a bit inside the first record's frame payload. The record starts
    // at byte 24; its meta-length field sits 18 bytes in (after T, dtype,
    // ndim, and three dims), and frames follow the metadata JSON.
    let meta_len = u32::from_le_bytes(bytes[42..46].try_into().unwrap()) as usize;
    let frames_start = 24 + 22 + meta_len;
    bytes[frames_start + 10] ^= 0x40;
    match read_bytes(&bytes) {
        Err(Error::Format { detail, .. }) => {
            assert!(
                detail.contains("checksum mismatch in trajectory 0"),
                "unexpected detail: {detail}"
            );
        }
        other => panic!("expected a checksum error, got {other:?}"),
    }
}

#[test]
fn trailing_bytes_are_rejected() {
    let ds = OfflineDataset::new(vec![mk_traj(3, 2, 2, 0)], 0.99, false).unwrap();
    let mut bytes = written_bytes(&ds);
    let end = bytes.len() as u64;
    bytes.push(0);
    match read_bytes(&bytes) {
        Err(Error::Format { offset, detail }) => {
            assert_eq!(offset, end);
            assert!(detail.contains("trailing"));
        }
        other => panic!("expected a trailing-bytes error, got {other:?}"),
    }
}

// ── Window sampling ──────────────────────────────────────────────────────────

/// Build a trajectory whose return-to-go at step t equals t exactly (gamma 0),
/// so a sampled window's end position can be recovered from its last slot.
fn position_coded_traj(t: usize, seed: u64) -> Trajectory {
    let mut tr = mk_traj(t, 2, 2, seed);
    tr.rewards = (0..t).map(|i| i as Real).collect();
    tr
}

#[test]
fn sampling_is_uniform_over_window_positions() {
    let t = 20;
    let ds = OfflineDataset::new(vec![position_coded_traj(t, 0)], 0.0, false).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1234);
    let draws = 100_000;
    let mut counts = vec![0u64; t];
    let batch = 1000;
    for _ in 0..draws / batch {
        let b = ds.sample_batch(batch, 1, &mut rng).unwrap();
        for bi in 0..batch {
            counts[b.rtg[bi] as usize] += 1;
        }
    }
    let expected = draws as f64 / t as f64;
    let x2: f64 =
        counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let p = 1.0 - ChiSquared::new((t - 1) as f64).unwrap().cdf(x2);
    assert!(p > 0.01, "window positions look non-uniform: chi2 = {x2:.2}, p = {p:.4}");
}

#[test]
fn sampling_weights_trajectories_by_length() {
    // Pooled-position sampling: a 30-step episode should supply 3x the windows
    // of a 10-step one.
    let mut a = mk_traj(30, 2, 2, 0);
    a.rewards = vec![1.0; 30];
    let mut b = mk_traj(10, 2, 2, 1);
    b.rewards = vec![2.0; 10];
    let ds = OfflineDataset::new(vec![a, b], 0.0, false).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let draws = 50_000;
    let mut from_a = 0u64;
    for _ in 0..draws / 500 {
        let batch = ds.sample_batch(500, 5, &mut rng).unwrap();
        for bi in 0..500 {
            let last = (bi + 1) * batch.t_ctx - 1;
            if batch.rtg[last] == 1.0 {
                from_a += 1;
            }
        }
    }
    let share = from_a as f64 / draws as f64;
    assert!((share - 0.75).abs() < 0.02, "long-episode share {share:.3}, expected 0.75");
}

#[test]
fn short_trajectories_are_excluded_once_context_exceeds_them() {
    let mut long = mk_traj(12, 2, 2, 0);
    long.rewards = vec![1.0; 12];
    let mut short = mk_traj(3, 2, 2, 1);
    short.rewards = vec![2.0; 3];
    let ds = OfflineDataset::new(vec![long, short], 0.0, false).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let b = ds.sample_batch(256, 8, &mut rng).unwrap();
    for bi in 0..256 {
        let last = (bi + 1) * b.t_ctx - 1;
        assert_eq!(b.rtg[last], 1.0, "short trajectory leaked into an 8-step window");
    }

    let err = ds.sample_batch(4, 13, &mut rng).unwrap_err();
    match err {
        Error::Sampling(detail) => assert!(detail.contains("exceeds every trajectory")),
        other => panic!("expected a sampling error, got {other:?}"),
    }
}

#[test]
fn windows_near_episode_start_are_left_padded() {
    let t = 10;
    let tr = position_coded_traj(t, 2);
    let expected = tr.clone();
    let ds = OfflineDataset::new(vec![tr], 0.0, false).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let b = ds.sample_batch(64, t, &mut rng).unwrap();
    let px = 4;
    let mut saw_padded = false;
    let mut saw_full = false;
    for bi in 0..64 {
        let pads: Vec<bool> = (0..t).map(|k| b.pad[bi * t + k]).collect();
        let real = pads.iter().filter(|&&p| p).count();
        assert!(real >= 1);
        let end = real - 1; // window covers steps 0..=end, left-padded above
        saw_padded |= real < t;
        saw_full |= real == t;
        for k in 0..t {
            let slot = bi * t + k;
            let s = end as i64 - (t - 1 - k) as i64;
            if s < 0 {
                assert!(!pads[k], "padding flag wrong at slot {k}");
                assert_eq!(b.actions_prev[slot], START_ACTION);
                assert!(b.frames[slot * px..(slot + 1) * px].iter().all(|&v| v == 0.0));
                assert_eq!(b.rtg[slot], 0.0);
            } else {
                let s = s as usize;
                assert!(pads[k]);
                assert_eq!(b.actions_target[slot], expected.actions[s]);
                let want_prev =
                    if s == 0 { START_ACTION } else { expected.actions[s - 1] };
                assert_eq!(b.actions_prev[slot], want_prev);
                assert_eq!(b.rtg[slot], s as Real);
                for (j, &v) in b.frames[slot * px..(slot + 1) * px].iter().enumerate() {
                    let raw = expected.frame(s)[j];
                    let want = (raw - ds.obs_mean) / ds.obs_std;
                    assert!((v - want).abs() <= 1e-6, "normalization mismatch at {j}");
                }
            }
        }
    }
    assert!(saw_padded, "no padded window in 64 draws of a 10-step episode");
    assert!(saw_full, "no full window in 64 draws");
}

#[test]
fn eval_history_windows_match_training_layout() {
    let h = 2;
    let w = 2;
    let frames: Vec<Vec<Real>> = (0..3).map(|i| vec![i as Real; h * w]).collect();
    let actions = vec![1u16, 2];
    let rtgs = vec![5.0, 4.0, 3.0];
    let b = SequenceBatch::from_history(&frames, &actions, &rtgs, 5, h, w, 1.0, 2.0).unwrap();
    // Three real steps land in the last three of five slots.
    assert_eq!(b.pad, vec![false, false, true, true, true]);
    assert_eq!(b.actions_prev[2], START_ACTION);
    assert_eq!(b.actions_prev[3], 1);
    assert_eq!(b.actions_prev[4], 2);
    assert_eq!(b.rtg[2..5], [5.0, 4.0, 3.0]);
    // Slot 2 holds frame 0 and slot 4 frame 2, normalized with the stats.
    assert!(b.frames[..2 * h * w].iter().all(|&v| v == 0.0), "padded slots must stay zero");
    assert!(b.frames[2 * h * w..3 * h * w].iter().all(|&v| v == -0.5));
    assert!(b.frames[4 * h * w..5 * h * w].iter().all(|&v| v == 0.5));

    let err = SequenceBatch::from_history(&frames, &actions[..1], &rtgs, 5, h, w, 0.0, 1.0);
    assert!(matches!(err, Err(Error::Parameter(_))));
}

#[test]
fn degenerate_batch_requests_are_rejected() {
    let ds = OfflineDataset::new(vec![mk_traj(4, 2, 2, 0)], 0.99, false).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!(ds.sample_batch(0, 4, &mut rng).is_err());
    assert!(ds.sample_batch(4, 0, &mut rng).is_err());
}

// ── Property tests ───────────────────────────────────────────────────────────

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn round_trip_any_small_dataset(
        seedlens in proptest::collection::vec((0u64..1000, 1usize..6), 1..4),
        gamma in 0.0f64..1.0,
        imitation in proptest::bool::ANY,
    ) {
        let trajs: Vec<Trajectory> =
            seedlens.iter().map(|&(s, t)| mk_traj(t, 3, 2, s)).collect();
        let ds = OfflineDataset::new(trajs, gamma as Real, imitation).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.adcr");
        ds.write(&path).unwrap();
        let back = OfflineDataset::read(&path).unwrap();
        prop_assert_eq!(back.trajectories.len(), ds.trajectories.len());
        prop_assert_eq!(back.imitation_mode, imitation);
        for (a, b) in ds.trajectories.iter().zip(&back.trajectories) {
            assert_traj_close(a, b);
        }
    }
}
