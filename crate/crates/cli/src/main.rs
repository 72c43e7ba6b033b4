use std::io::Write;

use clap::Parser;

fn main() {
    let cli = adacred_cli::Cli::parse();
    let env_seed = std::env::var("ADACRED_SEED").ok();
    match adacred_cli::dispatch(cli, env_seed.as_deref()) {
        Ok(summary) => {
            // A closed pipe (e.g. piping into head) is not an error.
            let out = std::io::stdout();
            let mut out = out.lock();
            for line in &summary.lines {
                if writeln!(out, "{line}").is_err() {
                    return;
                }
            }
            if let Some(path) = &summary.manifest_path {
                let _ = writeln!(out, "manifest: {}", path.display());
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(adacred_cli::exit_code(&e));
        }
    }
}
