use std::io::Write;

use serde::Serialize;

use qtreeff::groundspace::DEFAULT_BUDGET_BYTES;
use qtreeff::{oracle, projectors};

use crate::args::FormatArg;
use crate::config::RunConfig;
use crate::error::{CliError, EXIT_OK, EXIT_RESOURCE, EXIT_VIOLATION};

pub const TOOL: &str = "qtreeff";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Violation,
    Resource,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Ok => EXIT_OK,
            Status::Violation => EXIT_VIOLATION,
            Status::Resource => EXIT_RESOURCE,
        }
    }

    /// Violation if any check failed for a reason other than a budget.
    pub fn from_failures(failed: usize, resource_only: bool) -> Self {
        match (failed, resource_only) {
            (0, _) => Status::Ok,
            (_, true) => Status::Resource,
            _ => Status::Violation,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Tolerances {
    pub kernel_rel_tol: Option<f64>,
    pub kernel_default_cut: &'static str,
    pub ambiguity_factor: f64,
    pub oracle_nullity_tol: f64,
    pub annihilation_tol: f64,
    pub kernel_residual_bound: &'static str,
    pub dual_path_angle: f64,
    pub orthonormality_tol: f64,
    pub default_budget_bytes: u128,
}

impl Tolerances {
    pub fn of(cfg: &RunConfig) -> Self {
        Self {
            kernel_rel_tol: cfg.policy.rel_tol,
            kernel_default_cut: "max(rows, cols) * eps * sigma_max",
            ambiguity_factor: cfg.policy.ambiguity_factor,
            oracle_nullity_tol: cfg.oracle_tol,
            annihilation_tol: oracle::ANNIHILATION_TOL,
            kernel_residual_bound: "1e-9 * max|C| * sqrt(cols)",
            dual_path_angle: 1e-8,
            orthonormality_tol: projectors::ORTHONORMALITY_TOL,
            default_budget_bytes: DEFAULT_BUDGET_BYTES,
        }
    }
}

/// What a command hands back before it is wrapped and written.
pub struct CommandOutput {
    pub status: Status,
    pub verdict: String,
    pub result: serde_json::Value,
    /// CSV projection (header plus rows).
    pub csv: String,
}

#[derive(Serialize)]
pub struct Envelope<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub config: &'a RunConfig,
    pub tolerances: Tolerances,
    pub status: Status,
    pub verdict: &'a str,
    pub result: &'a serde_json::Value,
    pub wall_ms: f64,
}

pub fn to_value<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("report serializes")
}

pub fn csv_from_rows<T: Serialize>(header: &[&str], rows: &[T]) -> Result<String, CliError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.serialize(row)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| CliError::Io(std::io::Error::other(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("utf-8 csv"))
}

pub fn render(cfg: &RunConfig, out: &CommandOutput, wall_ms: f64) -> String {
    match cfg.format {
        FormatArg::Csv => out.csv.clone(),
        FormatArg::Json => {
            let env = Envelope {
                tool: TOOL,
                version: VERSION,
                command: &cfg.command,
                config: cfg,
                tolerances: Tolerances::of(cfg),
                status: out.status,
                verdict: &out.verdict,
                result: &out.result,
                wall_ms,
            };
            let mut s = serde_json::to_string_pretty(&env).expect("report serializes");
            s.push('\n');
            s
        }
    }
}

pub fn emit(cfg: &RunConfig, text: &str) -> Result<(), CliError> {
    match &cfg.out {
        Some(path) => std::fs::write(path, text)?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

/// Remove every `wall_ms` field, recursively.
pub fn strip_timing(v: &mut serde_json::Value) {
    match v {
        serde_json::Value::Object(m) => {
            m.remove("wall_ms");
            m.values_mut().for_each(strip_timing);
        }
        serde_json::Value::Array(a) => a.iter_mut().for_each(strip_timing),
        _ => {}
    }
}
