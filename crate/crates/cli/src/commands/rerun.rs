//! `rerun`: re-execute a manifest's command from its stored resolved
//! configuration and verify that every artifact comes out byte-identical.
//! Inputs are hash-checked first; a changed input cannot reproduce the run.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use adacred_core::{Error, Result};

use crate::manifest::{read_manifest, sha256_file, RunManifest, MANIFEST_NAME};
use crate::RunSummary;

pub fn run(manifest_path: &Path, out: Option<&Path>) -> Result<RunSummary> {
    let original = read_manifest(manifest_path)?;
    let out: PathBuf = match out {
        Some(p) => p.to_path_buf(),
        None => manifest_path.parent().unwrap_or(Path::new(".")).join("rerun"),
    };

    for stamp in &original.inputs {
        let now = sha256_file(Path::new(&stamp.path))?;
        if now != stamp.sha256 {
            return Err(Error::Contract(format!(
                "input {} changed since the manifest was written",
                stamp.path
            )));
        }
    }

    let mut summary = super::run_resolved(&original.command, &original.config, &out)?;
    let reproduced = read_manifest(&out.join(MANIFEST_NAME))?;
    verify_artifacts(&original, &reproduced)?;
    summary.lines.push(format!(
        "reproduced {} artifacts byte-identically from {}",
        original.artifacts.len(),
        manifest_path.display()
    ));
    Ok(summary)
}

/// Same artifact set, same hashes; everything else may differ only in the
/// creation timestamp, which is not compared.
fn verify_artifacts(original: &RunManifest, reproduced: &RunManifest) -> Result<()> {
    let index = |m: &RunManifest| -> BTreeMap<String, String> {
        m.artifacts.iter().map(|s| (s.path.clone(), s.sha256.clone())).collect()
    };
    let (a, b) = (index(original), index(reproduced));
    let mut bad = Vec::new();
    for (path, hash) in &a {
        match b.get(path) {
            None => bad.push(format!("{path} missing from the reproduction")),
            Some(h) if h != hash => bad.push(format!("{path} differs from the original run")),
            Some(_) => {}
        }
    }
    for path in b.keys() {
        if !a.contains_key(path) {
            bad.push(format!("{path} not present in the original run"));
        }
    }
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Error::Contract(format!("reproduction diverged: {}", bad.join("; "))))
    }
}
