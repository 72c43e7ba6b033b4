//! Run manifests. Each command writes exactly one `manifest.json` at the
//! root of its output directory, recording the resolved configuration plus
//! SHA-256 hashes of every input it read and every artifact it wrote.
//!
//! The creation timestamp is the only field allowed to differ between a run
//! and its reproduction; artifact files themselves never embed wall-clock
//! data.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use adacred_core::{Error, Result};

pub const MANIFEST_NAME: &str = "manifest.json";

/// A file the run touched, with its content hash. Input paths are kept as
/// given on the command line; artifact paths are relative to the output
/// directory so a rerun into a different directory still verifies.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileStamp {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    /// Fully materialized configuration; `rerun` replays exactly this value.
    pub config: serde_json::Value,
    pub inputs: Vec<FileStamp>,
    pub artifacts: Vec<FileStamp>,
    pub created: String,
}

impl RunManifest {
    pub fn new<C: Serialize>(command: &str, seed: u64, config: &C) -> Result<Self> {
        let config = serde_json::to_value(config)
            .map_err(|e| Error::Parameter(format!("config does not serialize: {e}")))?;
        Ok(RunManifest {
            tool: "adacred".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seed,
            config,
            inputs: Vec::new(),
            artifacts: Vec::new(),
            created: now_utc(),
        })
    }

    pub fn stamp_input(&mut self, path: &Path) -> Result<()> {
        self.inputs
            .push(FileStamp { path: path.display().to_string(), sha256: sha256_file(path)? });
        Ok(())
    }

    /// Hash `out/rel` and record it under its relative name.
    pub fn stamp_artifact(&mut self, out: &Path, rel: &str) -> Result<()> {
        self.artifacts.push(FileStamp { path: rel.into(), sha256: sha256_file(&out.join(rel))? });
        Ok(())
    }

    pub fn write(&self, out: &Path) -> Result<PathBuf> {
        let path = out.join(MANIFEST_NAME);
        let mut text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Parameter(format!("manifest does not serialize: {e}")))?;
        text.push('\n');
        fs::write(&path, text)?;
        Ok(path)
    }
}

pub fn read_manifest(path: &Path) -> Result<RunManifest> {
    let bytes = fs::read(path)?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Format {
        offset: 0,
        detail: format!("manifest {}: {e}", path.display()),
    })
}

// ── Hashing ────────────────────────────────────────────────────────────────

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path)?))
}

// ── Timestamps ─────────────────────────────────────────────────────────────

/// Gregorian date from days since the Unix epoch.
fn civil_from_days(z: i64) -> (i64, u32, u32) {
    let z = z + 719_468;
    let era = if z >= 0 { z } else { z - 146_096 } / 146_097;
    let doe = (z - era * 146_097) as u64;
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let y = yoe as i64 + era * 400;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = (doy - (153 * mp + 2) / 5 + 1) as u32;
    let m = if mp < 10 { mp + 3 } else { mp - 9 } as u32;
    (if m <= 2 { y + 1 } else { y }, m, d)
}

/// Current wall-clock time as `YYYY-MM-DDThh:mm:ssZ`.
pub fn now_utc() -> String {
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let (days, rem) = (secs / 86_400, secs % 86_400);
    let (y, mo, d) = civil_from_days(days as i64);
    format!("{y:04}-{mo:02}-{d:02}T{:02}:{:02}:{:02}Z", rem / 3600, (rem % 3600) / 60, rem % 60)
}
