//! Command-line driver: argument parsing, dispatch, reports and exit codes.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;
pub mod parallel;
pub mod report;

use std::time::Instant;

use clap::Parser;

pub use args::Cli;
pub use config::RunConfig;
pub use error::CliError;
pub use report::{CommandOutput, Status};

pub fn dispatch(cfg: &RunConfig) -> Result<CommandOutput, CliError> {
    match cfg.command.as_str() {
        "predict" => commands::predict::run(cfg),
        "simulate" => commands::simulate::run(cfg),
        "phase-scan" => commands::phase_scan::run(cfg),
        "frustration" => commands::frustration::run(cfg),
        "validate-frames" => commands::validate_frames::run(cfg),
        other => Err(CliError::Usage(format!("unknown command {other}"))),
    }
}

/// Run one invocation and return the rendered report with its exit code.
pub fn run_to_string(cfg: &RunConfig) -> Result<(String, i32), CliError> {
    let start = Instant::now();
    let out = dispatch(cfg)?;
    let text = report::render(cfg, &out, start.elapsed().as_secs_f64() * 1e3);
    Ok((text, out.status.exit_code()))
}

/// Full command-line entry point; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() {
                error::EXIT_USAGE
            } else {
                error::EXIT_OK
            };
            let _ = e.print();
            return code;
        }
    };
    let result = config::resolve(&cli).and_then(|cfg| {
        let (text, code) = run_to_string(&cfg)?;
        report::emit(&cfg, &text)?;
        Ok(code)
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            let body = serde_json::json!({ "tool": report::TOOL, "error": e.to_string(), "kind": e.kind() });
            eprintln!("{body}");
            e.exit_code()
        }
    }
}
