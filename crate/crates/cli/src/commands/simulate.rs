use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use qtreeff::groundspace::{self, GrowReport, TreeGroundSpace};
use qtreeff::oracle::{self, SeedOutcome};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::parallel::Pool;
use crate::report::{csv_from_rows, to_value, CommandOutput, Status};

#[derive(Debug, Clone, Serialize)]
pub struct SimSeed {
    pub seed: u64,
    pub grow: GrowReport,
    pub oracle: Option<SeedOutcome>,
    pub ok: bool,
    pub resource_limited: bool,
    pub notes: Vec<String>,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Serialize)]
struct SimRow {
    seed: u64,
    #[serde(rename = "E")]
    e: Option<usize>,
    #[serde(rename = "D")]
    d: String,
    nullity: Option<usize>,
    residual: Option<f64>,
    ok: bool,
    notes: String,
}

fn dump(dir: &Path, tgs: &TreeGroundSpace) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    for (i, level) in tgs.gammas.iter().enumerate() {
        for (j, g) in level.iter().enumerate() {
            let name = format!("seed{}_level{}_node{}.mtx", tgs.seed, i + 1, j);
            std::fs::write(dir.join(name), g.to_matrix_market())?;
        }
    }
    Ok(())
}

fn quality_ok(tgs: &TreeGroundSpace) -> bool {
    tgs.levels
        .iter()
        .all(|l| l.residual_ok() && l.ambiguities.is_empty() && l.dual_path.iter().all(|p| p.agree()))
}

pub fn simulate_seed(cfg: &RunConfig, d: usize, r: usize, seed: u64) -> Result<SimSeed, CliError> {
    let start = Instant::now();
    let tgs = groundspace::grow_tree_with(d, r, cfg.k, cfg.depth, seed, &cfg.grow_options())?;
    if let Some(dir) = &cfg.dump_gamma {
        dump(dir, &tgs)?;
    }
    let mut notes = Vec::new();
    let oracle = if cfg.oracle {
        let o = oracle::crosscheck_grown(&tgs, &cfg.oracle_config())?;
        notes.extend(o.notes.iter().cloned());
        Some(o)
    } else {
        None
    };
    let resource_limited = tgs.limit.is_some();
    if let Some(limit) = &tgs.limit {
        notes.push(format!("growth stopped: {limit}"));
    }
    let ok = tgs.complete() && tgs.matches_prediction() && quality_ok(&tgs) && oracle.as_ref().is_none_or(|o| o.agree);
    Ok(SimSeed {
        seed,
        grow: tgs.report(),
        oracle,
        ok,
        resource_limited,
        notes,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

pub fn run(cfg: &RunConfig) -> Result<CommandOutput, CliError> {
    let (d, r) = cfg.dr()?;
    let pool = Pool::new(cfg.jobs);
    let seeds = pool
        .map_items(&cfg.seeds, |&s| simulate_seed(cfg, d, r, s))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let failed: Vec<&SimSeed> = seeds.iter().filter(|s| !s.ok).collect();
    let status = Status::from_failures(failed.len(), failed.iter().all(|s| s.resource_limited));
    let predicted = seeds
        .first()
        .and_then(|s| s.grow.predicted.get(cfg.depth).cloned())
        .filter(|v| !v.starts_with('-'))
        .unwrap_or_else(|| "0".into());
    let verdict = if failed.is_empty() {
        format!("pass: E_{} = {} in all {} seeds", cfg.depth, predicted, seeds.len())
    } else {
        let ids: Vec<String> = failed.iter().map(|s| s.seed.to_string()).collect();
        format!("fail: seeds {}", ids.join(","))
    };
    let rows: Vec<SimRow> = seeds
        .iter()
        .map(|s| SimRow {
            seed: s.seed,
            e: s.grow.observed.get(cfg.depth).copied(),
            d: predicted.clone(),
            nullity: s.oracle.as_ref().and_then(|o| o.nullity),
            residual: s.oracle.as_ref().and_then(|o| o.residual),
            ok: s.ok,
            notes: s.notes.join("; "),
        })
        .collect();
    let csv = csv_from_rows(&["seed", "E", "D", "nullity", "residual", "ok", "notes"], &rows)?;
    Ok(CommandOutput {
        status,
        verdict,
        result: to_value(&serde_json::json!({ "predicted": predicted, "seeds": seeds })),
        csv,
    })
}
