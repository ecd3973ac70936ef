mod commands;
mod config;
mod output;

use std::process::ExitCode;

use clap::Parser;

use config::{Cli, RunConfig};

/// Environment variable holding the worker-thread count.
const THREADS_ENV: &str = "FISHER_CURVATURE_THREADS";

fn usage_error(msg: &str) -> ExitCode {
    eprintln!("error: {msg}\n\nRun `fisher-curvature --help` for usage.");
    ExitCode::from(2)
}

fn configure_threads() -> Result<(), String> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| format!("{THREADS_ENV} must be a positive integer, got `{value}`"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| format!("{THREADS_ENV}: {e}"))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Err(msg) = configure_threads() {
        return usage_error(&msg);
    }
    let config = match RunConfig::from_cli(cli) {
        Ok(c) => c,
        Err(msg) => return usage_error(&msg),
    };
    match commands::run(&config) {
        Ok(out) => {
            if let Err(e) = output::emit(&config, &out.artifacts) {
                let doc = output::error_doc(&config, "Io", &e.to_string());
                output::write_error(None, &doc);
                return ExitCode::from(1);
            }
            if out.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            let doc = output::error_doc(&config, e.kind(), &e.to_string());
            output::write_error(config.out.as_deref(), &doc);
            ExitCode::from(1)
        }
    }
}
