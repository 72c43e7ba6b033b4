//! Checkpoint container: config, named parameters, and optional optimizer
//! state, stored little-endian with a trailing CRC32.
//!
//! Values round-trip bit for bit (`Real::to_bits`), so a resumed run
//! continues from exactly the saved state. A width byte records whether the
//! file holds f32 or f64 scalars; loading with the wrong build is an error
//! rather than a silent cast.

use std::io::Read;
use std::path::Path;

use crate::numerics::{AdamState, Real, Tensor};
use crate::{Error, Result};

use super::config::ModelConfig;
use super::params::ParamStore;

const MAGIC: &[u8; 4] = b"ADCK";
const VERSION: u16 = 1;
const REAL_WIDTH: u8 = std::mem::size_of::<Real>() as u8;

/// Optimizer and stream state needed to resume training bit-exactly.
#[derive(Debug, Clone)]
pub struct TrainAux {
    /// Names of the optimized parameters, in optimizer order. Stage 1 trains
    /// a subset, so this can be shorter than the parameter list.
    pub opt_names: Vec<String>,
    pub adam: AdamState,
    pub rng_seed: [u8; 32],
    pub rng_word_pos: u128,
}

/// Everything a checkpoint file holds.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: ParamStore,
    pub aux: Option<TrainAux>,
}

// ── Writing ────────────────────────────────────────────────────────────────

fn put_real(buf: &mut Vec<u8>, v: Real) {
    buf.extend_from_slice(&v.to_bits().to_le_bytes());
}

fn put_str(buf: &mut Vec<u8>, s: &str) -> Result<()> {
    let bytes = s.as_bytes();
    let len: u16 = bytes
        .len()
        .try_into()
        .map_err(|_| Error::Capacity(format!("name {s:?} exceeds 65535 bytes")))?;
    buf.extend_from_slice(&len.to_le_bytes());
    buf.extend_from_slice(bytes);
    Ok(())
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(REAL_WIDTH);

    let config_json = serde_json::to_vec(&ckpt.config)
        .map_err(|e| Error::Contract(format!("config serialization failed: {e}")))?;
    out.extend_from_slice(&(config_json.len() as u32).to_le_bytes());
    out.extend_from_slice(&config_json);

    out.extend_from_slice(&(ckpt.params.len() as u32).to_le_bytes());
    for (name, t) in ckpt.params.iter() {
        put_str(&mut out, name)?;
        out.push(t.shape.len() as u8);
        for &d in &t.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in &t.data {
            put_real(&mut out, v);
        }
    }

    match &ckpt.aux {
        None => out.push(0),
        Some(aux) => {
            out.push(1);
            if aux.adam.m.len() != aux.opt_names.len() || aux.adam.v.len() != aux.opt_names.len() {
                return Err(Error::Contract(format!(
                    "optimizer state covers {} tensors, {} names listed",
                    aux.adam.m.len(),
                    aux.opt_names.len()
                )));
            }
            out.extend_from_slice(&(aux.opt_names.len() as u32).to_le_bytes());
            out.extend_from_slice(&aux.adam.step.to_le_bytes());
            out.extend_from_slice(&aux.adam.tokens.to_le_bytes());
            for (i, name) in aux.opt_names.iter().enumerate() {
                put_str(&mut out, name)?;
                let (m, v) = (&aux.adam.m[i], &aux.adam.v[i]);
                if m.len() != v.len() {
                    return Err(Error::Contract(format!(
                        "moment buffers for {name:?} disagree: {} vs {}",
                        m.len(),
                        v.len()
                    )));
                }
                out.extend_from_slice(&(m.len() as u32).to_le_bytes());
                for &x in m {
                    put_real(&mut out, x);
                }
                for &x in v {
                    put_real(&mut out, x);
                }
            }
            out.extend_from_slice(&aux.rng_seed);
            out.extend_from_slice(&aux.rng_word_pos.to_le_bytes());
        }
    }

    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    std::fs::write(path, out)?;
    Ok(())
}

// ── Reading ────────────────────────────────────────────────────────────────

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
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
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn real(&mut self, what: &str) -> Result<Real> {
        let b = self.take(REAL_WIDTH as usize, what)?;
        #[cfg(not(feature = "real64"))]
        let v = f32::from_bits(u32::from_le_bytes(b.try_into().unwrap()));
        #[cfg(feature = "real64")]
        let v = f64::from_bits(u64::from_le_bytes(b.try_into().unwrap()));
        Ok(v)
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let at = self.pos;
        let len = self.u16(what)? as usize;
        let bytes = self.take(len, what)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| Error::Format {
            offset: at as u64,
            detail: format!("{what} is not valid UTF-8"),
        })
    }
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 4 {
        return Err(Error::Format { offset: 0, detail: "file shorter than a checksum".into() });
    }
    let body_len = bytes.len() - 4;
    let stored_crc = u32::from_le_bytes(bytes[body_len..].try_into().unwrap());
    let computed = crc32fast::hash(&bytes[..body_len]);
    if stored_crc != computed {
        return Err(Error::Format {
            offset: body_len as u64,
            detail: format!("checksum mismatch: stored {stored_crc:#010x}, computed {computed:#010x}"),
        });
    }

    let mut cur = Cursor { bytes: &bytes[..body_len], pos: 0 };
    let magic = cur.take(4, "magic")?;
    if magic != MAGIC {
        return Err(Error::Format { offset: 0, detail: format!("bad magic {magic:02x?}") });
    }
    let version = cur.u16("version")?;
    if version != VERSION {
        return Err(Error::Format {
            offset: 4,
            detail: format!("unsupported version {version} (reader supports {VERSION})"),
        });
    }
    let width = cur.u8("scalar width")?;
    if width != REAL_WIDTH {
        return Err(Error::Contract(format!(
            "checkpoint stores {width}-byte scalars, this build uses {REAL_WIDTH}-byte"
        )));
    }

    let json_at = cur.pos;
    let json_len = cur.u32("config length")? as usize;
    let json = cur.take(json_len, "config")?;
    let config: ModelConfig = serde_json::from_slice(json).map_err(|e| Error::Format {
        offset: json_at as u64,
        detail: format!("malformed config JSON: {e}"),
    })?;
    config.validate()?;

    let count = cur.u32("parameter count")? as usize;
    let mut params = ParamStore::empty();
    for _ in 0..count {
        let name = cur.string("parameter name")?;
        let ndim = cur.u8("rank")? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(cur.u32("dimension")? as usize);
        }
        let numel: usize = shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        for _ in 0..numel {
            data.push(cur.real("parameter value")?);
        }
        params.insert(&name, Tensor::new(data, shape, true)?)?;
    }

    let aux = match cur.u8("optimizer flag")? {
        0 => None,
        1 => {
            let opt_count = cur.u32("optimizer tensor count")? as usize;
            let step = cur.u64("step counter")?;
            let tokens = cur.u64("token counter")?;
            let mut opt_names = Vec::with_capacity(opt_count);
            let mut m = Vec::with_capacity(opt_count);
            let mut v = Vec::with_capacity(opt_count);
            for _ in 0..opt_count {
                let name = cur.string("optimizer tensor name")?;
                let n = cur.u32("moment length")? as usize;
                let mut mi = Vec::with_capacity(n);
                for _ in 0..n {
                    mi.push(cur.real("first moment")?);
                }
                let mut vi = Vec::with_capacity(n);
                for _ in 0..n {
                    vi.push(cur.real("second moment")?);
                }
                opt_names.push(name);
                m.push(mi);
                v.push(vi);
            }
            let rng_seed: [u8; 32] = cur.take(32, "rng seed")?.try_into().unwrap();
            let rng_word_pos = u128::from_le_bytes(cur.take(16, "rng position")?.try_into().unwrap());
            Some(TrainAux {
                opt_names,
                adam: AdamState { m, v, step, tokens },
                rng_seed,
                rng_word_pos,
            })
        }
        other => {
            return Err(Error::Format {
                offset: (cur.pos - 1) as u64,
                detail: format!("optimizer flag must be 0 or 1, got {other}"),
            })
        }
    };

    if cur.pos != body_len {
        return Err(Error::Format {
            offset: cur.pos as u64,
            detail: format!("{} trailing bytes after the last field", body_len - cur.pos),
        });
    }

    Ok(Checkpoint { config, params, aux })
}
