//! Offline trajectory storage: in-memory dataset with return-to-go
//! conditioning, a versioned binary container, and uniform context-window
//! sampling for sequence batches.

mod container;

use rand::Rng;

use crate::numerics::Real;
use crate::{Error, Result};

pub use container::read_dataset;

/// Reserved previous-action id marking the first step of an episode.
pub const START_ACTION: u16 = u16::MAX;

/// Provenance carried by each trajectory.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct TrajectoryMeta {
    pub env_id: String,
    pub seed: u64,
    pub policy: String,
}

/// One fixed-length episode: T+1 frames, T actions, T rewards.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// `(len + 1) * frame_h * frame_w` grayscale pixels, row-major.
    pub frames: Vec<Real>,
    pub frame_h: usize,
    pub frame_w: usize,
    pub actions: Vec<u16>,
    pub rewards: Vec<Real>,
    pub meta: TrajectoryMeta,
}

impl Trajectory {
    pub fn new(
        frames: Vec<Real>,
        frame_h: usize,
        frame_w: usize,
        actions: Vec<u16>,
        rewards: Vec<Real>,
        meta: TrajectoryMeta,
    ) -> Result<Self> {
        let t = Trajectory { frames, frame_h, frame_w, actions, rewards, meta };
        t.validate()?;
        Ok(t)
    }

    /// Number of environment steps T.
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn frame_px(&self) -> usize {
        self.frame_h * self.frame_w
    }

    /// Observation before action `t`; valid for t in 0..=len.
    pub fn frame(&self, t: usize) -> &[Real] {
        let px = self.frame_px();
        &self.frames[t * px..(t + 1) * px]
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.actions.len();
        if t == 0 {
            return Err(Error::Parameter("trajectory must hold at least one step".into()));
        }
        if self.rewards.len() != t {
            return Err(Error::Parameter(format!(
                "{} rewards for {t} actions",
                self.rewards.len()
            )));
        }
        if self.frames.len() != (t + 1) * self.frame_px() {
            return Err(Error::Parameter(format!(
                "{} frame values, expected {} for {} frames of {}x{}",
                self.frames.len(),
                (t + 1) * self.frame_px(),
                t + 1,
                self.frame_h,
                self.frame_w
            )));
        }
        if self.actions.iter().any(|&a| a == START_ACTION) {
            return Err(Error::Parameter("action id collides with the start sentinel".into()));
        }
        Ok(())
    }
}

/// Discounted suffix sums: rtg[t] = sum_{u >= t} gamma^(u-t) * r[u].
pub fn compute_return_to_go(rewards: &[Real], gamma: Real) -> Vec<Real> {
    let mut rtg = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for t in (0..rewards.len()).rev() {
        acc = rewards[t] + gamma * acc;
        rtg[t] = acc;
    }
    rtg
}

/// A collection of trajectories plus dataset-level conditioning state.
/// Normalization statistics are computed once over the stored trajectories
/// (the training split) and travel with the file.
#[derive(Debug, Clone)]
pub struct OfflineDataset {
    pub trajectories: Vec<Trajectory>,
    pub gamma: Real,
    /// When set, rewards are zeroed in storage and every reward/RTG token
    /// reads as 0 (imitation regime).
    pub imitation_mode: bool,
    pub obs_mean: Real,
    pub obs_std: Real,
    rtg: Vec<Vec<Real>>,
}

impl OfflineDataset {
    pub fn new(mut trajectories: Vec<Trajectory>, gamma: Real, imitation_mode: bool) -> Result<Self> {
        if trajectories.is_empty() {
            return Err(Error::Parameter("dataset needs at least one trajectory".into()));
        }
        let (h, w) = (trajectories[0].frame_h, trajectories[0].frame_w);
        for tr in &trajectories {
            tr.validate()?;
            if (tr.frame_h, tr.frame_w) != (h, w) {
                return Err(Error::Parameter(format!(
                    "mixed frame sizes {}x{} vs {h}x{w}",
                    tr.frame_h, tr.frame_w
                )));
            }
        }
        if imitation_mode {
            for tr in &mut trajectories {
                tr.rewards.iter_mut().for_each(|r| *r = 0.0);
            }
        }
        let mut ds = OfflineDataset {
            trajectories,
            gamma,
            imitation_mode,
            obs_mean: 0.0,
            obs_std: 1.0,
            rtg: Vec::new(),
        };
        ds.recompute_derived();
        Ok(ds)
    }

    /// Rebuild RTG caches and normalization stats from stored trajectories.
    fn recompute_derived(&mut self) {
        self.rtg = self
            .trajectories
            .iter()
            .map(|tr| compute_return_to_go(&tr.rewards, self.gamma))
            .collect();
        let mut n = 0usize;
        let mut mean = 0.0f64;
        for tr in &self.trajectories {
            for &v in &tr.frames {
                mean += v as f64;
                n += 1;
            }
        }
        mean /= n.max(1) as f64;
        let mut var = 0.0f64;
        for tr in &self.trajectories {
            for &v in &tr.frames {
                var += (v as f64 - mean) * (v as f64 - mean);
            }
        }
        var /= n.max(1) as f64;
        self.obs_mean = mean as Real;
        self.obs_std = (var.sqrt() as Real).max(1e-6);
    }

    /// Construct with stats/RTG restored from a container read.
    pub(crate) fn from_parts(
        trajectories: Vec<Trajectory>,
        gamma: Real,
        imitation_mode: bool,
        obs_mean: Real,
        obs_std: Real,
    ) -> Result<Self> {
        let mut ds = OfflineDataset::new(trajectories, gamma, imitation_mode)?;
        // Stored stats are authoritative (they describe the training split).
        ds.obs_mean = obs_mean;
        ds.obs_std = obs_std;
        Ok(ds)
    }

    pub fn return_to_go(&self, traj: usize) -> &[Real] {
        &self.rtg[traj]
    }

    /// Largest undiscounted episode return; default RTG conditioning at eval.
    pub fn max_return(&self) -> Real {
        self.trajectories
            .iter()
            .map(|tr| tr.rewards.iter().sum::<Real>())
            .fold(Real::NEG_INFINITY, Real::max)
    }

    pub fn frame_h(&self) -> usize {
        self.trajectories[0].frame_h
    }

    pub fn frame_w(&self) -> usize {
        self.trajectories[0].frame_w
    }

    pub fn write(&self, path: &std::path::Path) -> Result<()> {
        container::write_dataset(self, path, false)
    }

    /// Big-endian variant used to exercise the byte-swapping read path.
    pub fn write_big_endian(&self, path: &std::path::Path) -> Result<()> {
        container::write_dataset(self, path, true)
    }

    pub fn read(path: &std::path::Path) -> Result<Self> {
        container::read_dataset(path)
    }

    /// Draw a batch of context windows. Sampling is uniform over the pooled
    /// window positions (the window's last step) of every trajectory long
    /// enough to fill a window; windows reaching before the episode start are
    /// left-padded and masked.
    pub fn sample_batch(
        &self,
        batch: usize,
        t_ctx: usize,
        rng: &mut impl Rng,
    ) -> Result<SequenceBatch> {
        if batch == 0 || t_ctx == 0 {
            return Err(Error::Parameter("batch and t_ctx must be positive".into()));
        }
        if self.trajectories.is_empty() {
            return Err(Error::Sampling("cannot sample from an empty dataset".into()));
        }
        // Every step of every trajectory is an equally likely window end;
        // windows ending early in an episode (or episodes shorter than the
        // context) come out left-padded, exactly like live rollouts.
        let total: usize = self.trajectories.iter().map(|t| t.len()).sum();
        let px = self.frame_px();
        let mut b = SequenceBatch::empty(batch, t_ctx, self.frame_h(), self.frame_w());
        for bi in 0..batch {
            let mut u = rng.gen_range(0..total);
            let mut ti = 0;
            for (i, t) in self.trajectories.iter().enumerate() {
                let len = t.len();
                if u < len {
                    ti = i;
                    break;
                }
                u -= len;
            }
            self.fill_window(&mut b, bi, ti, u, px);
        }
        Ok(b)
    }

    /// Copy the window ending at step `end` of trajectory `ti` into slot `bi`.
    fn fill_window(&self, b: &mut SequenceBatch, bi: usize, ti: usize, end: usize, px: usize) {
        let tr = &self.trajectories[ti];
        let rtg = &self.rtg[ti];
        let t_ctx = b.t_ctx;
        for k in 0..t_ctx {
            let s = end as i64 - (t_ctx - 1 - k) as i64;
            let slot = bi * t_ctx + k;
            if s < 0 {
                b.actions_prev[slot] = START_ACTION;
                continue; // stays zeroed and padded
            }
            let s = s as usize;
            let dst = &mut b.frames[slot * px..(slot + 1) * px];
            for (d, &v) in dst.iter_mut().zip(tr.frame(s)) {
                *d = (v - self.obs_mean) / self.obs_std;
            }
            b.actions_prev[slot] = if s == 0 { START_ACTION } else { tr.actions[s - 1] };
            b.actions_target[slot] = tr.actions[s];
            b.rtg[slot] = rtg[s];
            b.pad[slot] = true;
        }
    }

    fn frame_px(&self) -> usize {
        self.frame_h() * self.frame_w()
    }
}

/// A batch of left-padded context windows in model input layout.
#[derive(Debug, Clone)]
pub struct SequenceBatch {
    /// Normalized frames, `[b, t_ctx, frame_h * frame_w]`.
    pub frames: Vec<Real>,
    /// Previous-step action tokens (START_ACTION at episode starts), `[b, t_ctx]`.
    pub actions_prev: Vec<u16>,
    /// Prediction targets, `[b, t_ctx]`.
    pub actions_target: Vec<u16>,
    /// Return-to-go conditioning, `[b, t_ctx]`.
    pub rtg: Vec<Real>,
    /// True where the slot holds a real step; padded slots are excluded from
    /// the loss.
    pub pad: Vec<bool>,
    pub b: usize,
    pub t_ctx: usize,
    pub frame_h: usize,
    pub frame_w: usize,
}

impl SequenceBatch {
    pub fn empty(b: usize, t_ctx: usize, frame_h: usize, frame_w: usize) -> Self {
        SequenceBatch {
            frames: vec![0.0; b * t_ctx * frame_h * frame_w],
            actions_prev: vec![START_ACTION; b * t_ctx],
            actions_target: vec![0; b * t_ctx],
            rtg: vec![0.0; b * t_ctx],
            pad: vec![false; b * t_ctx],
            b,
            t_ctx,
            frame_h,
            frame_w,
        }
    }

    /// Single rolling window built from a live episode history, normalized
    /// with the supplied training-split statistics. Histories shorter than
    /// `t_ctx` are left-padded like training windows near an episode start.
    pub fn from_history(
        frames: &[Vec<Real>],
        actions: &[u16],
        rtgs: &[Real],
        t_ctx: usize,
        frame_h: usize,
        frame_w: usize,
        obs_mean: Real,
        obs_std: Real,
    ) -> Result<Self> {
        let n = frames.len();
        if n == 0 || actions.len() != n - 1 || rtgs.len() != n {
            return Err(Error::Parameter(format!(
                "history with {n} frames needs {} actions and {n} rtg values; got {} and {}",
                n.saturating_sub(1),
                actions.len(),
                rtgs.len()
            )));
        }
        let px = frame_h * frame_w;
        let mut b = SequenceBatch::empty(1, t_ctx, frame_h, frame_w);
        for k in 0..t_ctx {
            let s = n as i64 - 1 - (t_ctx - 1 - k) as i64;
            if s < 0 {
                continue;
            }
            let s = s as usize;
            let dst = &mut b.frames[k * px..(k + 1) * px];
            for (d, &v) in dst.iter_mut().zip(&frames[s]) {
                *d = (v - obs_mean) / obs_std;
            }
            b.actions_prev[k] = if s == 0 { START_ACTION } else { actions[s - 1] };
            b.rtg[k] = rtgs[s];
            b.pad[k] = true;
        }
        Ok(b)
    }
}
