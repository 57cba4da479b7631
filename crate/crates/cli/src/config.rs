use std::path::PathBuf;

use serde::Serialize;

use qtreeff::groundspace::{Budget, GrowOptions, KernelPath, DEFAULT_EXACT_MAX_ENTRIES};
use qtreeff::linalg::TolPolicy;
use qtreeff::oracle::OracleConfig;
use qtreeff::Mode;

use crate::args::{Cli, Command, FormatArg, ModeArg, PathArg, Span};
use crate::error::CliError;

pub const DEFAULT_DEPTH: usize = 10;
pub const DEFAULT_SIMULATE_DEPTH: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridConfig {
    pub d: Span,
    /// `None` means `1..=d^2` for every `d`.
    pub r: Option<Span>,
    pub k: Span,
}

impl GridConfig {
    pub fn points(&self) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::new();
        for d in self.d.values() {
            let r_span = self.r.unwrap_or(Span { lo: 1, hi: d * d });
            for k in self.k.values() {
                for r in r_span.values() {
                    out.push((d, r, k));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrustrationConfig {
    pub assert_theorem: bool,
    pub lemma: bool,
    pub lemma_n0: Option<usize>,
    pub fullrank: bool,
    pub level: usize,
}

/// Fully resolved, validated configuration of one invocation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub d: Option<usize>,
    pub r: Option<usize>,
    pub k: usize,
    pub depth: usize,
    pub seeds: Vec<u64>,
    pub mode: ModeArg,
    pub policy: TolPolicy,
    pub oracle_tol: f64,
    pub budget_dense: usize,
    pub budget_bytes: u128,
    pub exact_max_entries: u128,
    pub path: PathArg,
    pub format: FormatArg,
    pub out: Option<PathBuf>,
    pub dump_gamma: Option<PathBuf>,
    pub oracle: bool,
    pub gamma_series: bool,
    pub grid: Option<GridConfig>,
    pub frustration: Option<FrustrationConfig>,
    /// Execution detail that never changes results.
    #[serde(skip)]
    pub jobs: usize,
}

impl RunConfig {
    pub fn grow_options(&self) -> GrowOptions {
        GrowOptions {
            mode: match self.mode {
                ModeArg::Numeric => Mode::Numeric,
                ModeArg::Rational => Mode::Rational,
            },
            policy: self.policy,
            path: match self.path {
                PathArg::Structured => KernelPath::Structured,
                PathArg::Dense => KernelPath::Dense,
            },
            budget: Budget {
                max_bytes: self.budget_bytes,
                exact_max_entries: self.exact_max_entries,
            },
            ..GrowOptions::default()
        }
    }

    pub fn oracle_config(&self) -> OracleConfig {
        OracleConfig {
            dense_dim: self.budget_dense,
            tol: self.oracle_tol,
            memory_bytes: self.budget_bytes,
        }
    }

    /// `(d, r)`, both required by this command.
    pub fn dr(&self) -> Result<(usize, usize), CliError> {
        match (self.d, self.r) {
            (Some(d), Some(r)) => Ok((d, r)),
            _ => Err(CliError::Usage(format!("{} needs --d and --r", self.command))),
        }
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Predict => "predict",
        Command::Simulate => "simulate",
        Command::PhaseScan(_) => "phase-scan",
        Command::Frustration(_) => "frustration",
        Command::ValidateFrames(_) => "validate-frames",
    }
}

pub fn resolve(cli: &Cli) -> Result<RunConfig, CliError> {
    let g = &cli.global;
    let usage = |m: String| Err(CliError::Usage(m));
    let name = command_name(&cli.command);
    let depth = g.depth.unwrap_or(match cli.command {
        Command::Simulate => DEFAULT_SIMULATE_DEPTH,
        _ => DEFAULT_DEPTH,
    });
    if depth < 1 {
        return usage("--depth must be >= 1".into());
    }
    if g.k < 1 {
        return usage("--k must be >= 1".into());
    }
    if g.jobs < 1 {
        return usage("--jobs must be >= 1".into());
    }
    if let Some(d) = g.d {
        if d < 2 {
            return usage(format!("--d must be >= 2 (got {d})"));
        }
        if let Some(r) = g.r {
            if r > d * d {
                return usage(format!("--r must be <= d^2 = {} (got {r})", d * d));
            }
        }
    }
    if let Some(t) = g.tol {
        if !(t > 0.0 && t < 1.0) {
            return usage(format!("--tol must lie in (0, 1) (got {t})"));
        }
    }
    if !(g.oracle_tol > 0.0 && g.oracle_tol < 1.0) {
        return usage(format!("--oracle-tol must lie in (0, 1) (got {})", g.oracle_tol));
    }
    let seeds: Vec<u64> = match &g.seed_list {
        Some(list) => list.clone(),
        None => (0..g.seeds as u64).map(|i| g.seed_base.wrapping_add(i)).collect(),
    };
    let needs_dr = matches!(
        cli.command,
        Command::Predict | Command::Simulate | Command::Frustration(_)
    );
    if needs_dr && (g.d.is_none() || g.r.is_none()) {
        return usage(format!("{name} needs --d and --r"));
    }
    if matches!(cli.command, Command::Simulate | Command::Frustration(_)) && seeds.is_empty() {
        return usage(format!("{name} needs at least one seed"));
    }
    let grid = match &cli.command {
        Command::PhaseScan(a) | Command::ValidateFrames(a) => {
            let d = a.d_range.or(g.d.map(Span::single)).unwrap_or(Span { lo: 2, hi: 6 });
            if d.lo < 2 && d.lo <= d.hi {
                return usage("grid d values must be >= 2".into());
            }
            let r = a.r_range.or(g.r.map(Span::single));
            let k = a.k_range.unwrap_or(Span::single(g.k));
            if k.lo < 1 && k.lo <= k.hi {
                return usage("grid k values must be >= 1".into());
            }
            Some(GridConfig { d, r, k })
        }
        _ => None,
    };
    let frustration = match &cli.command {
        Command::Frustration(a) => {
            if a.fullrank && a.level < 2 {
                return usage("--level must be >= 2".into());
            }
            Some(FrustrationConfig {
                assert_theorem: a.assert_theorem,
                lemma: a.lemma || a.lemma_n0.is_some(),
                lemma_n0: a.lemma_n0,
                fullrank: a.fullrank,
                level: a.level,
            })
        }
        _ => None,
    };
    Ok(RunConfig {
        command: name.to_string(),
        d: g.d,
        r: g.r,
        k: g.k,
        depth,
        seeds,
        mode: g.mode,
        policy: TolPolicy {
            rel_tol: g.tol,
            ..TolPolicy::default()
        },
        oracle_tol: g.oracle_tol,
        budget_dense: g.budget_dense,
        budget_bytes: (g.budget_mb as u128) << 20,
        exact_max_entries: DEFAULT_EXACT_MAX_ENTRIES,
        path: g.path,
        format: g.format,
        out: g.out.clone(),
        dump_gamma: g.dump_gamma.clone(),
        oracle: g.oracle,
        gamma_series: g.gamma_series,
        grid,
        frustration,
        jobs: g.jobs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::Parser;

    fn parse(args: &[&str]) -> Result<RunConfig, CliError> {
        let mut v = vec!["qtreeff"];
        v.extend_from_slice(args);
        resolve(&Cli::try_parse_from(v).unwrap())
    }

    #[test]
    fn defaults_are_filled_in() {
        let c = parse(&["simulate", "--d", "2", "--r", "1"]).unwrap();
        assert_eq!(c.depth, DEFAULT_SIMULATE_DEPTH);
        assert_eq!(c.seeds, vec![0, 1, 2, 3, 4]);
        let c = parse(&["predict", "--d", "4", "--r", "2", "--k", "2", "--n", "3"]).unwrap();
        assert_eq!(c.depth, 3);
        let c = parse(&["frustration", "--d", "3", "--r", "3", "--seed-list", "7,9"]).unwrap();
        assert_eq!(c.seeds, vec![7, 9]);
    }

    #[test]
    fn invalid_parameters_are_usage_errors() {
        assert!(matches!(
            parse(&["predict", "--d", "2", "--r", "5"]),
            Err(CliError::Usage(_))
        ));
        assert!(matches!(
            parse(&["predict", "--d", "1", "--r", "1"]),
            Err(CliError::Usage(_))
        ));
        assert!(matches!(parse(&["simulate", "--d", "2"]), Err(CliError::Usage(_))));
        assert!(matches!(
            parse(&["predict", "--d", "2", "--r", "1", "--tol", "2"]),
            Err(CliError::Usage(_))
        ));
    }

    #[test]
    fn grid_defaults() {
        let c = parse(&["phase-scan", "--d-range", "2..3", "--k-range", "1..2"]).unwrap();
        let pts = c.grid.unwrap().points();
        assert_eq!(pts.len(), 2 * (4 + 9));
        let c = parse(&["phase-scan", "--d-range", "3..2"]).unwrap();
        assert!(c.grid.unwrap().points().is_empty());
    }
}
