//! One module per subcommand. Each exposes a `Resolved*` configuration (the
//! value stored in the manifest), a `resolve` applying the precedence chain,
//! and a `run(&cfg, out)` that does the work and writes the manifest.

pub mod causal_cmd;
pub mod eval_cmd;
pub mod gen_data;
pub mod masks;
pub mod rerun;
pub mod sweep;
pub mod train;

use std::path::Path;

use serde::de::DeserializeOwned;

use adacred_core::{Error, Result};

use crate::RunSummary;

/// Replay a manifest's command from its stored resolved configuration.
pub fn run_resolved(command: &str, config: &serde_json::Value, out: &Path) -> Result<RunSummary> {
    fn parse<T: DeserializeOwned>(command: &str, v: &serde_json::Value) -> Result<T> {
        serde_json::from_value(v.clone()).map_err(|e| Error::Format {
            offset: 0,
            detail: format!("manifest config for {command}: {e}"),
        })
    }
    match command {
        "gen-data" => gen_data::run(&parse(command, config)?, out),
        "train" => train::run(&parse(command, config)?, out),
        "eval" => eval_cmd::run(&parse(command, config)?, out),
        "sweep" => sweep::run(&parse(command, config)?, out),
        "masks" => masks::run(&parse(command, config)?, out),
        "causal" => causal_cmd::run(&parse(command, config)?, out),
        other => Err(Error::Parameter(format!("manifest command {other:?} is not replayable"))),
    }
}

/// Pretty JSON with a trailing newline, the layout used by every JSON
/// artifact.
pub(crate) fn to_json_pretty<T: serde::Serialize>(value: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Parameter(format!("report does not serialize: {e}")))?;
    text.push('\n');
    Ok(text)
}
