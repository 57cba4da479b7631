use serde::Serialize;

use qtreeff::frustration::{self, FullRankReport, LemmaReport, TheoremReport};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::parallel::Pool;
use crate::report::{csv_from_rows, to_value, CommandOutput, Status};

#[derive(Debug, Clone, Serialize)]
pub struct FrustrationResult {
    pub notes: Vec<String>,
    pub theorem: Option<TheoremReport>,
    pub lemma: Option<LemmaReport>,
    pub fullrank: Option<FullRankReport>,
}

#[derive(Debug, Clone, Serialize)]
struct SeedRow {
    seed: u64,
    #[serde(rename = "E")]
    e: String,
    n0: Option<usize>,
    onset: Option<usize>,
    bound: Option<usize>,
    bound_ok: bool,
    #[serde(rename = "E_n0_plus_2")]
    e_n0_plus_2: Option<usize>,
    limit: String,
}

pub fn run(cfg: &RunConfig) -> Result<CommandOutput, CliError> {
    let (d, r) = cfg.dr()?;
    let flags = cfg.frustration.as_ref().expect("frustration flags resolved");
    let opts = cfg.grow_options();
    let pool = Pool::new(cfg.jobs);
    let mut notes = Vec::new();
    let run_theorem = flags.assert_theorem || !(flags.lemma || flags.fullrank);
    if run_theorem && cfg.k != 1 {
        notes.push(format!(
            "onset checks run on chains (k = 1); --k {} applies to --fullrank only",
            cfg.k
        ));
    }
    let theorem = run_theorem
        .then(|| frustration::verify_theorem_k1p_with(d, r, &cfg.seeds, cfg.depth, &opts, &pool))
        .transpose()?;
    let lemma = flags
        .lemma
        .then(|| frustration::verify_lemma_k1_with(d, r, flags.lemma_n0, cfg.depth, &cfg.seeds, &opts, &pool))
        .transpose()?;
    let fullrank = flags
        .fullrank
        .then(|| frustration::verify_fullrank_appendix_with(d, r, cfg.k, flags.level, &cfg.seeds, &opts, &pool))
        .transpose()?;

    let mut failures = Vec::new();
    let mut resource_only = true;
    if let (true, Some(t)) = (flags.assert_theorem, &theorem) {
        if !t.passed() {
            resource_only &= t.per_seed.iter().filter(|s| !s.ok()).all(|s| s.limit.is_some());
            failures.push(format!("onset: {}", t.verdict));
        }
    }
    if let Some(l) = &lemma {
        if !l.passed() {
            resource_only = false;
            failures.push(format!("collapse: {}", l.verdict));
        }
    }
    if let Some(f) = &fullrank {
        if !f.passed() {
            resource_only = false;
            failures.push(format!("full rank: {}", f.verdict));
        }
    }
    let status = Status::from_failures(failures.len(), resource_only);
    let mut parts = Vec::new();
    if let Some(t) = &theorem {
        parts.push(format!("onset: {}", t.verdict));
    }
    if let Some(l) = &lemma {
        parts.push(format!("collapse: {}", l.verdict));
    }
    if let Some(f) = &fullrank {
        parts.push(format!("full rank: {}", f.verdict));
    }
    let rows: Vec<SeedRow> = theorem
        .iter()
        .flat_map(|t| &t.per_seed)
        .map(|s| SeedRow {
            seed: s.seed,
            e: s.e.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";"),
            n0: s.n0,
            onset: s.onset,
            bound: s.bound,
            bound_ok: s.bound_ok,
            e_n0_plus_2: s.e_n0_plus_2,
            limit: s.limit.clone().unwrap_or_default(),
        })
        .collect();
    let csv = csv_from_rows(
        &["seed", "E", "n0", "onset", "bound", "bound_ok", "E_n0_plus_2", "limit"],
        &rows,
    )?;
    Ok(CommandOutput {
        status,
        verdict: parts.join("; "),
        result: to_value(&FrustrationResult {
            notes,
            theorem,
            lemma,
            fullrank,
        }),
        csv,
    })
}
