//! Binary trajectory container.
//!
//! Layout (all integers little-endian unless the endianness flag is 1):
//!   magic "ADCR" | u16 version = 1 | u8 endianness (0 = LE, 1 = BE)
//!   | u32 trajectory count | f32 gamma | u8 imitation flag
//!   | f32 obs_mean | f32 obs_std
//! then per trajectory:
//!   u32 T | u8 dtype (0 = f32) | u8 ndim | u32 dims[ndim] (= [1, h, w])
//!   | u32 meta_len | meta JSON | f32 frames ((T+1) * h * w)
//!   | u16 actions (T) | f32 rewards (T) | u32 CRC32 of the record bytes
//!
//! Frames are stored as 32-bit floats regardless of the build's `Real` width.
//! Big-endian files are byte-swapped on read; writes always emit flag 0.

use std::io::{Read, Write};
use std::path::Path;

use crate::numerics::Real;
use crate::{Error, Result};

use super::{OfflineDataset, Trajectory, TrajectoryMeta};

const MAGIC: &[u8; 4] = b"ADCR";
const VERSION: u16 = 1;

// ── Writing ──────────────────────────────────────────────────────────────────

pub(super) fn write_dataset(ds: &OfflineDataset, path: &Path, big: bool) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u16(&mut out, VERSION, big);
    out.push(if big { 1 } else { 0 });
    put_u32(&mut out, ds.trajectories.len() as u32, big);
    put_f32(&mut out, ds.gamma as f32, big);
    out.push(if ds.imitation_mode { 1 } else { 0 });
    put_f32(&mut out, ds.obs_mean as f32, big);
    put_f32(&mut out, ds.obs_std as f32, big);
    for tr in &ds.trajectories {
        let mut rec = Vec::new();
        put_u32(&mut rec, tr.len() as u32, big);
        rec.push(0); // dtype f32
        rec.push(3); // ndim
        for d in [1, tr.frame_h, tr.frame_w] {
            put_u32(&mut rec, d as u32, big);
        }
        let meta = serde_json::to_vec(&tr.meta)
            .map_err(|e| Error::Parameter(format!("unserializable metadata: {e}")))?;
        put_u32(&mut rec, meta.len() as u32, big);
        rec.extend_from_slice(&meta);
        for &v in &tr.frames {
            put_f32(&mut rec, v as f32, big);
        }
        for &a in &tr.actions {
            put_u16(&mut rec, a, big);
        }
        for &r in &tr.rewards {
            put_f32(&mut rec, r as f32, big);
        }
        let crc = crc32fast::hash(&rec);
        out.extend_from_slice(&rec);
        put_u32(&mut out, crc, big);
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&out)?;
    Ok(())
}

fn put_u16(buf: &mut Vec<u8>, v: u16, big: bool) {
    buf.extend_from_slice(&if big { v.to_be_bytes() } else { v.to_le_bytes() });
}

fn put_u32(buf: &mut Vec<u8>, v: u32, big: bool) {
    buf.extend_from_slice(&if big { v.to_be_bytes() } else { v.to_le_bytes() });
}

fn put_f32(buf: &mut Vec<u8>, v: f32, big: bool) {
    buf.extend_from_slice(&if big { v.to_be_bytes() } else { v.to_le_bytes() });
}

// ── Reading ──────────────────────────────────────────────────────────────────

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    big: bool,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Format {
                offset: self.pos as u64,
                detail: format!("truncated while reading {what} ({n} bytes wanted)"),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        let b: [u8; 2] = self.take(2, what)?.try_into().unwrap();
        Ok(if self.big { u16::from_be_bytes(b) } else { u16::from_le_bytes(b) })
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b: [u8; 4] = self.take(4, what)?.try_into().unwrap();
        Ok(if self.big { u32::from_be_bytes(b) } else { u32::from_le_bytes(b) })
    }

    fn f32(&mut self, what: &str) -> Result<f32> {
        let b: [u8; 4] = self.take(4, what)?.try_into().unwrap();
        Ok(if self.big { f32::from_be_bytes(b) } else { f32::from_le_bytes(b) })
    }
}

pub fn read_dataset(path: &Path) -> Result<OfflineDataset> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut cur = Cursor { bytes: &bytes, pos: 0, big: false };

    let magic = cur.take(4, "magic")?;
    if magic != MAGIC {
        return Err(Error::Format { offset: 0, detail: format!("bad magic {magic:02x?}, want \"ADCR\"") });
    }
    // The endianness flag sits after the version, but the version itself is
    // multi-byte; probe the flag first (it is a single byte at offset 6).
    if bytes.len() < 7 {
        return Err(Error::Format { offset: 4, detail: "truncated header".into() });
    }
    cur.big = match bytes[6] {
        0 => false,
        1 => true,
        v => {
            return Err(Error::Format { offset: 6, detail: format!("unknown endianness flag {v}") });
        }
    };
    let version = cur.u16("version")?;
    if version != VERSION {
        return Err(Error::Format {
            offset: 4,
            detail: format!("unsupported version {version}, want {VERSION}"),
        });
    }
    cur.pos += 1; // endianness flag, already consumed above
    let count = cur.u32("trajectory count")? as usize;
    let gamma = cur.f32("gamma")? as Real;
    let imitation = cur.u8("imitation flag")? != 0;
    let obs_mean = cur.f32("obs_mean")? as Real;
    let obs_std = cur.f32("obs_std")? as Real;

    let mut trajectories = Vec::with_capacity(count);
    for ti in 0..count {
        let rec_start = cur.pos;
        let t = cur.u32("trajectory length")? as usize;
        let dtype = cur.u8("frame dtype")?;
        if dtype != 0 {
            return Err(Error::Format {
                offset: (cur.pos - 1) as u64,
                detail: format!("unsupported frame dtype {dtype} in trajectory {ti}"),
            });
        }
        let ndim = cur.u8("frame ndim")? as usize;
        if ndim != 3 {
            return Err(Error::Format {
                offset: (cur.pos - 1) as u64,
                detail: format!("expected 3 frame dims, got {ndim}"),
            });
        }
        let c = cur.u32("frame channels")? as usize;
        let h = cur.u32("frame height")? as usize;
        let w = cur.u32("frame width")? as usize;
        if c != 1 {
            return Err(Error::Format {
                offset: (cur.pos - 12) as u64,
                detail: format!("only single-channel frames supported, got {c}"),
            });
        }
        let meta_len = cur.u32("metadata length")? as usize;
        let meta_off = cur.pos;
        let meta_bytes = cur.take(meta_len, "metadata")?;
        let meta: TrajectoryMeta = serde_json::from_slice(meta_bytes).map_err(|e| Error::Format {
            offset: meta_off as u64,
            detail: format!("malformed metadata JSON: {e}"),
        })?;
        let mut frames = Vec::with_capacity((t + 1) * h * w);
        for _ in 0..(t + 1) * h * w {
            frames.push(cur.f32("frame data")? as Real);
        }
        let mut actions = Vec::with_capacity(t);
        for _ in 0..t {
            actions.push(cur.u16("actions")?);
        }
        let mut rewards = Vec::with_capacity(t);
        for _ in 0..t {
            rewards.push(cur.f32("rewards")? as Real);
        }
        let stored_crc_off = cur.pos;
        let stored_crc = cur.u32("record checksum")?;
        // The checksum covers the record bytes exactly as written to disk.
        let computed = crc32fast::hash(&bytes[rec_start..stored_crc_off]);
        if stored_crc != computed {
            return Err(Error::Format {
                offset: stored_crc_off as u64,
                detail: format!(
                    "checksum mismatch in trajectory {ti}: stored {stored_crc:#010x}, computed {computed:#010x}"
                ),
            });
        }
        trajectories.push(Trajectory { frames, frame_h: h, frame_w: w, actions, rewards, meta });
    }
    if cur.pos != bytes.len() {
        return Err(Error::Format {
            offset: cur.pos as u64,
            detail: format!("{} trailing bytes after final trajectory", bytes.len() - cur.pos),
        });
    }
    OfflineDataset::from_parts(trajectories, gamma, imitation, obs_mean, obs_std)
}
