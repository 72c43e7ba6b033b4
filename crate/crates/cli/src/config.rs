//! `key = value` config files and the seed override.
//!
//! Files hold one assignment per line; `#` starts a comment and blank lines
//! are skipped. Keys use the long flag names without the leading dashes.
//! File entries override built-in defaults and are overridden in turn by
//! explicit flags; `ADACRED_SEED` beats everything for the seed.

use std::fmt::Display;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use adacred_core::{Error, Result};

/// Parsed config file: `(line, key, value)` in file order.
#[derive(Debug, Clone, Default)]
pub struct KvFile {
    pub entries: Vec<(usize, String, String)>,
}

pub fn parse_kv(text: &str) -> Result<KvFile> {
    let mut entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Parameter(format!("config line {}: expected `key = value`, got {raw:?}", i + 1))
        })?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || value.is_empty() {
            return Err(Error::Parameter(format!(
                "config line {}: empty key or value in {raw:?}",
                i + 1
            )));
        }
        entries.push((i + 1, key.to_string(), value.to_string()));
    }
    Ok(KvFile { entries })
}

pub fn load_kv(path: &Path) -> Result<KvFile> {
    parse_kv(&fs::read_to_string(path)?)
}

pub fn load_optional(path: Option<&Path>) -> Result<Option<KvFile>> {
    path.map(load_kv).transpose()
}

/// Apply every file entry through a per-command setter, prefixing errors
/// with the offending line number.
pub fn apply_file<F>(file: Option<&KvFile>, mut set: F) -> Result<()>
where
    F: FnMut(&str, &str) -> Result<()>,
{
    let Some(file) = file else { return Ok(()) };
    for (line, key, value) in &file.entries {
        set(key, value).map_err(|e| match e {
            Error::Parameter(msg) => Error::Parameter(format!("config line {line}: {msg}")),
            other => other,
        })?;
    }
    Ok(())
}

/// Typed parse with the key name in the error message.
pub fn parse_val<T>(key: &str, value: &str) -> Result<T>
where
    T: FromStr,
    T::Err: Display,
{
    value.parse().map_err(|e| Error::Parameter(format!("{key} = {value:?}: {e}")))
}

/// Booleans accept `true/false/1/0`.
pub fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" => Ok(true),
        "false" | "0" => Ok(false),
        _ => Err(Error::Parameter(format!("{key} = {value:?}: expected true or false"))),
    }
}

/// Parse the `ADACRED_SEED` override, if present.
pub fn env_seed(raw: Option<&str>) -> Result<Option<u64>> {
    match raw {
        None => Ok(None),
        Some(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::Parameter(format!("ADACRED_SEED {s:?} is not an unsigned integer"))),
    }
}
