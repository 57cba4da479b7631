use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

/// Inclusive integer range written `a..b` (or a single value `a`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Span {
    pub lo: usize,
    pub hi: usize,
}

impl Span {
    pub fn single(v: usize) -> Self {
        Self { lo: v, hi: v }
    }

    pub fn values(&self) -> std::ops::RangeInclusive<usize> {
        self.lo..=self.hi
    }
}

pub fn parse_span(s: &str) -> Result<Span, String> {
    let num = |t: &str| {
        t.trim()
            .parse::<usize>()
            .map_err(|e| format!("invalid bound {t:?}: {e}"))
    };
    match s.split_once("..") {
        Some((a, b)) => Ok(Span {
            lo: num(a)?,
            hi: num(b.trim_start_matches('='))?,
        }),
        None => num(s).map(Span::single),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    Numeric,
    Rational,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FormatArg {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PathArg {
    Structured,
    Dense,
}

#[derive(Debug, Clone, Parser)]
#[command(
    name = "qtreeff",
    version,
    about = "Ground spaces of random rank-r projector Hamiltonians on chains and k-ary trees"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub global: GlobalArgs,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Dimension recursion, gamma ratios, phase verdict and lower bound.
    Predict,
    /// Grow random instances and optionally cross-check them densely.
    Simulate,
    /// Sweep a (d, r, k) grid and classify every point.
    PhaseScan(GridArgs),
    /// Frustration-onset, collapse-witness and full-rank checks.
    Frustration(FrustrationArgs),
    /// Validate one-hot and random frames over a (d, r, k) grid.
    ValidateFrames(GridArgs),
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Local dimension.
    #[arg(long, global = true)]
    pub d: Option<usize>,
    /// Projector rank per edge.
    #[arg(long, global = true)]
    pub r: Option<usize>,
    /// Branching factor (1 = chain).
    #[arg(long, global = true, default_value_t = 1)]
    pub k: usize,
    /// Tree depth / number of levels [default: 10 for predict, phase-scan and frustration; 3 for simulate].
    #[arg(long, global = true, visible_alias = "n-max", alias = "n")]
    pub depth: Option<usize>,
    /// Number of consecutive seeds starting at --seed-base.
    #[arg(long, global = true, default_value_t = 5)]
    pub seeds: usize,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed_base: u64,
    /// Explicit comma-separated seeds (overrides --seeds/--seed-base).
    #[arg(long, global = true, value_delimiter = ',')]
    pub seed_list: Option<Vec<u64>>,
    #[arg(long, global = true, value_enum, default_value_t = ModeArg::Numeric)]
    pub mode: ModeArg,
    /// Relative singular-value cut for kernels [default: max(rows, cols) * eps * sigma_max].
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Relative eigenvalue cut for dense nullity.
    #[arg(long, global = true, default_value_t = qtreeff::oracle::DEFAULT_NULLITY_TOL)]
    pub oracle_tol: f64,
    /// Largest Hilbert-space dimension d^N handled by the dense oracle.
    #[arg(long, global = true, default_value_t = qtreeff::oracle::DEFAULT_DENSE_DIM)]
    pub budget_dense: usize,
    /// Memory cap for dense working storage, in MiB.
    #[arg(long, global = true, env = "QTREEFF_BUDGET_MB", default_value_t = 2048)]
    pub budget_mb: u64,
    /// Kernel route.
    #[arg(long, global = true, value_enum, default_value_t = PathArg::Structured)]
    pub path: PathArg,
    /// Worker threads for seeds and grid points.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = FormatArg::Json)]
    pub format: FormatArg,
    /// Write every level tensor as a MatrixMarket file into this directory.
    #[arg(long, global = true)]
    pub dump_gamma: Option<PathBuf>,
    /// Cross-check against the dense Hamiltonian.
    #[arg(long, global = true)]
    pub oracle: bool,
    /// Emit gamma_n series (phase-scan and predict).
    #[arg(long, global = true)]
    pub gamma_series: bool,
}

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    /// Inclusive d range `a..b` [default: --d, else 2..6].
    #[arg(long, value_parser = parse_span)]
    pub d_range: Option<Span>,
    /// Inclusive r range [default: --r, else 1..d^2].
    #[arg(long, value_parser = parse_span)]
    pub r_range: Option<Span>,
    /// Inclusive k range [default: --k].
    #[arg(long, value_parser = parse_span)]
    pub k_range: Option<Span>,
}

#[derive(Debug, Clone, Args)]
pub struct FrustrationArgs {
    /// Fail (exit 3) unless the onset bound and E_{n0+2} = 0 hold for every seed.
    #[arg(long)]
    pub assert_theorem: bool,
    /// Run the single-step collapse witness (chains).
    #[arg(long)]
    pub lemma: bool,
    /// Level at which to apply the collapse witness [default: first level where its hypothesis holds].
    #[arg(long)]
    pub lemma_n0: Option<usize>,
    /// Run the tree full-row-rank witness at --level.
    #[arg(long)]
    pub fullrank: bool,
    /// Level for --fullrank.
    #[arg(long, default_value_t = 2)]
    pub level: usize,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spans() {
        assert_eq!(parse_span("2..6").unwrap(), Span { lo: 2, hi: 6 });
        assert_eq!(parse_span("2..=6").unwrap(), Span { lo: 2, hi: 6 });
        assert_eq!(parse_span("3").unwrap(), Span::single(3));
        assert!(parse_span("a..2").is_err());
        assert_eq!(parse_span("5..4").unwrap().values().count(), 0);
    }

    #[test]
    fn cli_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
