//! Key-door gridworld rendered to grayscale frames. A band of distractor
//! columns on the right edge carries pure per-step noise that never affects
//! reward, giving pixel regions the model can provably drop.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::numerics::Real;
use crate::{Error, Result};

/// Rendering intensities.
pub const BG: Real = 0.0;
pub const KEY: Real = 0.6;
pub const DOOR: Real = 0.8;
pub const AGENT: Real = 1.0;

/// Discrete actions.
pub const UP: u16 = 0;
pub const DOWN: u16 = 1;
pub const LEFT: u16 = 2;
pub const RIGHT: u16 = 3;
pub const ACTION_COUNT: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridWorldSpec {
    /// Playable cells per side, distractor columns excluded.
    pub grid: usize,
    /// Pixels per cell.
    pub cell_px: usize,
    /// Distractor columns appended on the right, in cells.
    pub distractor_cols: usize,
    /// Uniform noise amplitude inside the distractor band.
    pub distractor_noise: Real,
    /// Episode length; episodes never terminate early.
    pub horizon: usize,
    pub agent_start: (usize, usize),
    pub key_pos: (usize, usize),
    pub door_pos: (usize, usize),
}

impl GridWorldSpec {
    /// 6x6 cells at 4 px plus two distractor columns: 24x32 frames. The
    /// distractor band spans pixel columns 24..32, exactly one 8-px patch
    /// column, so patch-level pruning can isolate it cleanly.
    pub fn desk() -> Self {
        GridWorldSpec {
            grid: 6,
            cell_px: 4,
            distractor_cols: 2,
            distractor_noise: 0.3,
            horizon: 36,
            agent_start: (3, 0),
            key_pos: (0, 3),
            door_pos: (5, 5),
        }
    }

    /// 7x7 cells at 12 px: 84x84 frames, no distractor band.
    pub fn paper() -> Self {
        GridWorldSpec {
            grid: 7,
            cell_px: 12,
            distractor_cols: 0,
            distractor_noise: 0.0,
            horizon: 24,
            agent_start: (3, 0),
            key_pos: (0, 3),
            door_pos: (6, 6),
        }
    }

    pub fn frame_h(&self) -> usize {
        self.grid * self.cell_px
    }

    pub fn frame_w(&self) -> usize {
        (self.grid + self.distractor_cols) * self.cell_px
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid < 2 {
            return Err(Error::Parameter("grid must be at least 2 cells".into()));
        }
        if self.cell_px == 0 {
            return Err(Error::Parameter("cell_px must be positive".into()));
        }
        if self.horizon == 0 {
            return Err(Error::Parameter("horizon must be positive".into()));
        }
        for (name, (r, c)) in [
            ("agent_start", self.agent_start),
            ("key_pos", self.key_pos),
            ("door_pos", self.door_pos),
        ] {
            if r >= self.grid || c >= self.grid {
                return Err(Error::Parameter(format!(
                    "{name} ({r}, {c}) outside {0}x{0} grid",
                    self.grid
                )));
            }
        }
        if self.key_pos == self.door_pos
            || self.key_pos == self.agent_start
            || self.door_pos == self.agent_start
        {
            return Err(Error::Parameter("agent, key, and door must occupy distinct cells".into()));
        }
        if !(0.0..=1.0).contains(&self.distractor_noise) {
            return Err(Error::Parameter("distractor_noise outside [0, 1]".into()));
        }
        Ok(())
    }

    /// Resample agent/key/door positions uniformly until distinct.
    pub fn randomize_layout(&mut self, rng: &mut impl Rng) -> Result<()> {
        for _ in 0..1000 {
            let cell = |rng: &mut dyn rand::RngCore| -> (usize, usize) {
                (rng.gen_range(0..self.grid), rng.gen_range(0..self.grid))
            };
            let a = cell(rng);
            let k = cell(rng);
            let d = cell(rng);
            if a != k && a != d && k != d {
                self.agent_start = a;
                self.key_pos = k;
                self.door_pos = d;
                return Ok(());
            }
        }
        Err(Error::Sampling("could not place agent, key, and door in distinct cells".into()))
    }
}

/// Mutable episode state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridWorldState {
    pub agent: (usize, usize),
    pub has_key: bool,
    pub reward_given: bool,
    pub step: usize,
}

impl GridWorldState {
    pub fn reset(spec: &GridWorldSpec) -> Self {
        GridWorldState { agent: spec.agent_start, has_key: false, reward_given: false, step: 0 }
    }
}

/// Advance one step. Moves off the grid clamp in place. Picking up the key
/// sets `has_key`; entering the door with the key pays +1 exactly once.
pub fn step_gridworld(
    spec: &GridWorldSpec,
    state: &mut GridWorldState,
    action: u16,
) -> Result<Real> {
    let (mut r, mut c) = state.agent;
    match action {
        UP => r = r.saturating_sub(1),
        DOWN => r = (r + 1).min(spec.grid - 1),
        LEFT => c = c.saturating_sub(1),
        RIGHT => c = (c + 1).min(spec.grid - 1),
        other => {
            return Err(Error::Parameter(format!("action {other} out of range (4 actions)")));
        }
    }
    state.agent = (r, c);
    if state.agent == spec.key_pos {
        state.has_key = true;
    }
    let mut reward = 0.0;
    if state.agent == spec.door_pos && state.has_key && !state.reward_given {
        reward = 1.0;
        state.reward_given = true;
    }
    state.step += 1;
    Ok(reward)
}

/// Render the current state to a row-major frame. Distractor pixels are
/// drawn from a ChaCha8 stream keyed by `(episode_seed, step)`, so the band
/// changes every step but is reproducible.
pub fn render(spec: &GridWorldSpec, state: &GridWorldState, episode_seed: u64) -> Vec<Real> {
    let h = spec.frame_h();
    let w = spec.frame_w();
    let mut frame = vec![BG; h * w];
    let mut fill = |cell: (usize, usize), v: Real| {
        let (r, c) = cell;
        for pr in r * spec.cell_px..(r + 1) * spec.cell_px {
            for pc in c * spec.cell_px..(c + 1) * spec.cell_px {
                frame[pr * w + pc] = v;
            }
        }
    };
    if !state.has_key {
        fill(spec.key_pos, KEY);
    }
    fill(spec.door_pos, DOOR);
    fill(state.agent, AGENT);
    if spec.distractor_cols > 0 && spec.distractor_noise > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(
            episode_seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(state.step as u64),
        );
        let left = spec.grid * spec.cell_px;
        for pr in 0..h {
            for pc in left..w {
                frame[pr * w + pc] = rng.gen_range(0.0..spec.distractor_noise);
            }
        }
    }
    frame
}

/// Column index (in pixels) where the distractor band begins, if present.
pub fn distractor_band(spec: &GridWorldSpec) -> Option<usize> {
    (spec.distractor_cols > 0).then(|| spec.grid * spec.cell_px)
}

/// Shortest action sequence start -> key -> door, greedy row-then-column.
/// Returns None if the path does not fit inside the horizon.
pub fn scripted_optimal(spec: &GridWorldSpec) -> Option<Vec<u16>> {
    let mut actions = Vec::new();
    let walk = |from: (usize, usize), to: (usize, usize), acc: &mut Vec<u16>| {
        let (mut r, mut c) = from;
        while r != to.0 {
            if r < to.0 {
                acc.push(DOWN);
                r += 1;
            } else {
                acc.push(UP);
                r -= 1;
            }
        }
        while c != to.1 {
            if c < to.1 {
                acc.push(RIGHT);
                c += 1;
            } else {
                acc.push(LEFT);
                c -= 1;
            }
        }
        (r, c)
    };
    let at_key = walk(spec.agent_start, spec.key_pos, &mut actions);
    walk(at_key, spec.door_pos, &mut actions);
    (actions.len() <= spec.horizon).then_some(actions)
}
