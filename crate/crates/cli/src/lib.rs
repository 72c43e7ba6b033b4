//! Command-line driver for the AdaCred workspace: dataset generation,
//! two-stage training, evaluation, pruning-ratio sweeps, mask visualization,
//! and causal analysis.
//!
//! Every command writes its artifacts under one `--out` directory with a run
//! manifest at the root. The manifest records the fully resolved
//! configuration plus content hashes of all inputs and outputs, and `rerun`
//! re-executes it and verifies the outputs byte for byte.
//!
//! Configuration precedence, lowest to highest: built-in defaults, then a
//! `key = value` config file, then command-line flags, then the
//! `ADACRED_SEED` environment variable (seed only).

pub mod commands;
pub mod config;
pub mod manifest;
pub mod opts;
pub mod svg;

use std::path::PathBuf;

use adacred_core::{Error, Result};

pub use opts::{Cli, Command};

/// What a completed command hands back to `main`: lines for stdout and the
/// path of the manifest it wrote (none for `rerun`, which only verifies).
#[derive(Debug)]
pub struct RunSummary {
    pub lines: Vec<String>,
    pub manifest_path: Option<PathBuf>,
}

/// Process exit code for an error.
///
/// 2 usage (bad flag or config value), 3 dependency (missing or mismatched
/// input artifact), 4 data format (malformed file bytes), 5 numerical or
/// statistical failure. Flag parse errors exit 2 through clap itself.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Parameter(_) | Error::Capacity(_) | Error::Sampling(_) => 2,
        Error::Contract(_) | Error::Dim { .. } | Error::Io(_) => 3,
        Error::Format { .. } => 4,
        Error::Numerical(_) | Error::Statistics(_) => 5,
    }
}

/// Resolve and execute one parsed invocation. `env_seed_raw` is the value of
/// `ADACRED_SEED` if set; it is injected rather than read here so tests can
/// drive the dispatcher without touching process state.
pub fn dispatch(cli: Cli, env_seed_raw: Option<&str>) -> Result<RunSummary> {
    let env_seed = config::env_seed(env_seed_raw)?;
    match cli.command {
        Command::GenData(f) => {
            let file = config::load_optional(f.common.config.as_deref())?;
            let cfg = commands::gen_data::resolve(&f, file.as_ref(), env_seed)?;
            commands::gen_data::run(&cfg, &f.common.out)
        }
        Command::Train(f) => {
            let file = config::load_optional(f.common.config.as_deref())?;
            let cfg = commands::train::resolve(&f, file.as_ref(), env_seed)?;
            commands::train::run(&cfg, &f.common.out)
        }
        Command::Eval(f) => {
            let file = config::load_optional(f.common.config.as_deref())?;
            let cfg = commands::eval_cmd::resolve(&f, file.as_ref(), env_seed)?;
            commands::eval_cmd::run(&cfg, &f.common.out)
        }
        Command::Sweep(f) => {
            let file = config::load_optional(f.common.config.as_deref())?;
            let cfg = commands::sweep::resolve(&f, file.as_ref(), env_seed)?;
            commands::sweep::run(&cfg, &f.common.out)
        }
        Command::Masks(f) => {
            let file = config::load_optional(f.common.config.as_deref())?;
            let cfg = commands::masks::resolve(&f, file.as_ref())?;
            commands::masks::run(&cfg, &f.common.out)
        }
        Command::Causal(f) => {
            let file = config::load_optional(f.common.config.as_deref())?;
            let cfg = commands::causal_cmd::resolve(&f, file.as_ref(), env_seed)?;
            commands::causal_cmd::run(&cfg, &f.common.out)
        }
        Command::Rerun(f) => commands::rerun::run(&f.manifest, f.out.as_deref()),
    }
}
