//! `staggered` command-line front end.

mod args;
mod commands;
mod output;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use serde_json::json;

use args::{Cli, Command};

/// A failure with a machine-readable category.
#[derive(Debug)]
pub struct Failure {
    pub kind: &'static str,
    pub message: String,
    pub path: Option<String>,
    pub exit_code: u8,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Failure {
            kind: "usage",
            message: message.into(),
            path: None,
            exit_code: 2,
        }
    }

    fn from_anyhow(err: anyhow::Error) -> Self {
        if let Some(f) = err.downcast_ref::<Failure>() {
            return Failure {
                kind: f.kind,
                message: f.message.clone(),
                path: f.path.clone(),
                exit_code: f.exit_code,
            };
        }
        let core = err.chain().find_map(|e| e.downcast_ref::<staggered::Error>());
        let io_path = err.chain().find_map(|e| e.downcast_ref::<output::PathError>()).map(|p| p.path.clone());
        Failure {
            kind: core.map(|e| e.kind()).unwrap_or(if io_path.is_some() { "io" } else { "internal" }),
            message: format!("{err:#}"),
            path: core.and_then(|e| e.path().map(String::from)).or(io_path),
            exit_code: 1,
        }
    }

    fn to_json(&self) -> serde_json::Value {
        json!({ "error": { "kind": self.kind, "message": self.message, "path": self.path } })
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Failure {}

fn fail(failure: Failure, output: Option<PathBuf>) -> ExitCode {
    let body = serde_json::to_string_pretty(&failure.to_json()).expect("error json");
    eprintln!("{body}");
    if let Some(dir) = output {
        if std::fs::create_dir_all(&dir).is_ok() {
            let _ = std::fs::write(dir.join("error.json"), body + "\n");
        }
    }
    ExitCode::from(failure.exit_code)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            return fail(Failure::usage(e.to_string().trim_end()), None);
        }
    };
    let output = cli.command.common().output.clone();
    if let Err(e) = configure_threads(cli.command.common().threads) {
        return fail(Failure::from_anyhow(e), Some(output));
    }
    let result = match cli.command {
        Command::Ingest(a) => commands::ingest(&a),
        Command::Simulate(a) => commands::simulate(&a),
        Command::Estimate(a) => commands::estimate(&a),
        Command::Benchmark(a) => commands::benchmark(&a),
        Command::Report(a) => report::report(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(Failure::from_anyhow(e), Some(output)),
    }
}

#[cfg(feature = "parallel")]
fn configure_threads(threads: Option<usize>) -> anyhow::Result<()> {
    if let Some(n) = threads {
        if n == 0 {
            return Err(Failure::usage("--threads must be at least 1").into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

#[cfg(not(feature = "parallel"))]
fn configure_threads(threads: Option<usize>) -> anyhow::Result<()> {
    if threads.is_some_and(|n| n > 1) {
        log::warn!("built without the `parallel` feature; --threads is ignored");
    }
    Ok(())
}
